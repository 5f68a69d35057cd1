//! CSV and JSON formats for schedules, trajectories, branch flows and
//! error reports.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::case::{BusType, Case};
use crate::error::{Error, Result};
use crate::powerflow::{InjectionTarget, Network, VoltageState};
use crate::trajectory::{Breakpoint, BranchFlow, ErrorReport, InjectionSchedule, IntervalError};

pub const SCHEDULE_HEADER: [&str; 4] = ["time_hours", "bus", "p_pu", "q_pu"];
pub const TRAJECTORY_HEADER: [&str; 6] = ["time_hours", "bus", "v_real", "v_imag", "v_mag", "method"];
pub const ERROR_HEADER: [&str; 5] = ["interval", "max_err_real", "max_err_imag", "argmax_bus", "argmax_time"];
pub const BRANCH_HEADER: [&str; 10] =
    ["time_hours", "branch", "from_bus", "to_bus", "p_from", "q_from", "p_to", "q_to", "i_from_mag", "i_to_mag"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Linear,
    Combined,
    Newton,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Linear => "linear",
            Method::Combined => "combined",
            Method::Newton => "newton",
        }
    }
}

#[derive(Debug, Deserialize)]
struct ScheduleRow {
    time_hours: f64,
    bus: usize,
    p_pu: f64,
    q_pu: Option<f64>,
}

fn check_header<R: Read>(reader: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = reader.headers()?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(Error::Schedule(format!(
            "expected header '{}', found '{}'",
            expected.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// Reads `time_hours,bus,p_pu,q_pu`: one row per breakpoint and non-slack
/// bus, P as net injection. Q on PV buses and rows for the slack bus are
/// ignored with a warning. PV setpoints come from the case.
pub fn read_schedule<R: Read>(source: R, network: &Network) -> Result<InjectionSchedule> {
    let case = &network.case;
    let sets = &network.sets;
    let index = case.index_map();
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    check_header(&mut reader, &SCHEDULE_HEADER)?;

    let mut rows: BTreeMap<u64, (f64, BTreeMap<usize, (f64, Option<f64>)>)> = BTreeMap::new();
    let mut order: Vec<u64> = Vec::new();
    let mut warned_pv = false;
    let mut warned_slack = false;
    for (k, record) in reader.deserialize::<ScheduleRow>().enumerate() {
        let row = record?;
        let line = k + 2;
        if !row.time_hours.is_finite() || !row.p_pu.is_finite() {
            return Err(Error::Schedule(format!("line {line}: non-finite value")));
        }
        let Some(&i) = index.get(&row.bus) else {
            return Err(Error::Schedule(format!("line {line}: unknown bus {}", row.bus)));
        };
        match case.buses[i].bus_type {
            BusType::Slack => {
                if !warned_slack {
                    log::warn!("schedule rows for the slack bus are ignored");
                    warned_slack = true;
                }
                continue;
            }
            BusType::PV if row.q_pu.is_some() && !warned_pv => {
                log::warn!("reactive power given for PV buses is ignored");
                warned_pv = true;
            }
            _ => {}
        }
        let key = row.time_hours.to_bits();
        let entry = rows.entry(key).or_insert_with(|| {
            order.push(key);
            (row.time_hours, BTreeMap::new())
        });
        if entry.1.insert(i, (row.p_pu, row.q_pu)).is_some() {
            return Err(Error::Schedule(format!("line {line}: bus {} repeated at time {}", row.bus, row.time_hours)));
        }
    }

    let pv_vsq: Vec<f64> = sets.pv.iter().map(|&i| case.buses[i].v_setpoint.powi(2)).collect();
    let mut breakpoints = Vec::with_capacity(order.len());
    for key in order {
        let (time, values) = &rows[&key];
        let lookup = |i: usize| {
            values.get(&i).ok_or_else(|| {
                Error::Schedule(format!("time {time}: no row for bus {}", case.buses[i].id))
            })
        };
        let p = sets.non_slack.iter().map(|&i| lookup(i).map(|v| v.0)).collect::<Result<Vec<_>>>()?;
        let q = sets
            .pq
            .iter()
            .map(|&i| {
                lookup(i)?.1.ok_or_else(|| {
                    Error::Schedule(format!("time {time}: missing reactive power for PQ bus {}", case.buses[i].id))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        breakpoints.push(Breakpoint { time: *time, target: InjectionTarget { p, q, pv_vsq: pv_vsq.clone() } });
    }
    InjectionSchedule::new(breakpoints)
}

/// Writes a schedule readable by [`read_schedule`]; PV rows leave `q_pu` empty.
pub fn write_schedule<W: Write>(schedule: &InjectionSchedule, network: &Network, out: W) -> Result<()> {
    let case = &network.case;
    let sets = &network.sets;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SCHEDULE_HEADER)?;
    for bp in &schedule.breakpoints {
        bp.target.check_layout(sets)?;
        let mut pq = sets.pq.iter().zip(&bp.target.q).peekable();
        for (&i, p) in sets.non_slack.iter().zip(&bp.target.p) {
            let q = match pq.peek() {
                Some((&j, q)) if j == i => {
                    let q = q.to_string();
                    pq.next();
                    q
                }
                _ => String::new(),
            };
            w.write_record(&[bp.time.to_string(), case.buses[i].id.to_string(), p.to_string(), q])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Streams trajectory rows `time_hours,bus,v_real,v_imag,v_mag,method`.
pub struct TrajectoryWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(TRAJECTORY_HEADER)?;
        Ok(Self { inner })
    }

    pub fn write_state(&mut self, case: &Case, state: &VoltageState, method: Method) -> Result<()> {
        for (i, bus) in case.buses.iter().enumerate() {
            self.inner.write_record(&[
                state.time.to_string(),
                bus.id.to_string(),
                state.v_real[i].to_string(),
                state.v_imag[i].to_string(),
                state.magnitude(i).to_string(),
                method.as_str().to_string(),
            ])?;
        }
        Ok(())
    }

    /// Writes per-interval sample rows; the first sample of every interval
    /// after the first repeats the previous endpoint and is skipped.
    pub fn write_samples(&mut self, case: &Case, samples: &[Vec<VoltageState>], method: Method) -> Result<()> {
        for (l, row) in samples.iter().enumerate() {
            for (j, state) in row.iter().enumerate() {
                if l > 0 && j == 0 {
                    continue;
                }
                self.write_state(case, state, method)?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub fn write_branch_flows<W: Write>(flows: &[BranchFlow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(BRANCH_HEADER)?;
    for f in flows {
        w.write_record(&[
            f.time.to_string(),
            f.branch.to_string(),
            f.from_bus.to_string(),
            f.to_bus.to_string(),
            f.s_from.re.to_string(),
            f.s_from.im.to_string(),
            f.s_to.re.to_string(),
            f.s_to.im.to_string(),
            f.i_from.norm().to_string(),
            f.i_to.norm().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_error_report<W: Write>(report: &ErrorReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ERROR_HEADER)?;
    for e in &report.intervals {
        w.write_record(&[
            e.interval.to_string(),
            e.max_err_real.to_string(),
            e.max_err_imag.to_string(),
            e.argmax_bus.to_string(),
            e.argmax_time.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct ErrorSummary<'a> {
    pub global_max: f64,
    pub worst_interval: Option<usize>,
    pub unique_comparisons: usize,
    pub failed_samples: usize,
    pub intervals: &'a [IntervalError],
}

pub fn error_summary_json(report: &ErrorReport) -> Result<String> {
    let worst = report
        .intervals
        .iter()
        .max_by(|a, b| a.max_err().total_cmp(&b.max_err()))
        .map(|e| e.interval);
    Ok(serde_json::to_string_pretty(&ErrorSummary {
        global_max: report.global_max,
        worst_interval: worst,
        unique_comparisons: report.unique_comparisons,
        failed_samples: report.failed_samples,
        intervals: &report.intervals,
    })?)
}
