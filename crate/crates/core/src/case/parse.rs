//! Reader for the numeric-matrix subset of MATPOWER case files.
//!
//! Recognised statements are `mpc.baseMVA = <number>;` and
//! `mpc.<name> = [ ... ];` matrices. Only `bus`, `gen` and `branch` are
//! interpreted; other matrices and cell arrays are skipped with a warning.

use std::collections::HashMap;

use super::{Branch, Bus, BusType, Case};
use crate::error::{Error, Result};

// MATPOWER column indices
const BUS_I: usize = 0;
const BUS_TYPE: usize = 1;
const PD: usize = 2;
const QD: usize = 3;
const GS: usize = 4;
const BS: usize = 5;
const VM: usize = 7;
const VA: usize = 8;
const BUS_MIN_COLS: usize = 9;

const GEN_BUS: usize = 0;
const PG: usize = 1;
const QG: usize = 2;
const VG: usize = 5;
const GEN_STATUS: usize = 7;
const GEN_MIN_COLS: usize = 8;

const F_BUS: usize = 0;
const T_BUS: usize = 1;
const BR_R: usize = 2;
const BR_X: usize = 3;
const BR_B: usize = 4;
const TAP: usize = 8;
const SHIFT: usize = 9;
const BR_STATUS: usize = 10;
const BRANCH_MIN_COLS: usize = 11;

/// Standard tables with no role in power flow.
const KNOWN_UNUSED: [&str; 5] = ["gencost", "areas", "dcline", "dclinecost", "genfuel"];

#[derive(Debug)]
struct Row {
    line: usize,
    values: Vec<f64>,
}

#[derive(Debug)]
struct Matrix {
    rows: Vec<Row>,
}

enum State {
    Idle,
    Matrix { name: String, start_line: usize, rows: Vec<Row>, pending: Vec<(usize, f64)> },
    Cell { name: String, start_line: usize },
}

/// Removes a trailing `%` comment, ignoring `%` inside single-quoted strings.
fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    for (i, c) in line.char_indices() {
        match c {
            '\'' => in_string = !in_string,
            '%' if !in_string => return &line[..i],
            _ => {}
        }
    }
    line
}

fn parse_number(token: &str, line: usize) -> Result<f64> {
    match token {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        _ => token.parse::<f64>().map_err(|_| Error::MalformedCase {
            line,
            message: format!("invalid number '{token}'"),
        }),
    }
}

/// Feeds the body of a matrix literal into `rows`; `;` terminates a row and
/// so does the end of a line.
fn push_matrix_text(text: &str, line: usize, rows: &mut Vec<Row>, pending: &mut Vec<(usize, f64)>) -> Result<()> {
    for (k, segment) in text.split(';').enumerate() {
        if k > 0 {
            flush_row(rows, pending);
        }
        for token in segment.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            pending.push((line, parse_number(token, line)?));
        }
    }
    flush_row(rows, pending);
    Ok(())
}

fn flush_row(rows: &mut Vec<Row>, pending: &mut Vec<(usize, f64)>) {
    if let Some(&(line, _)) = pending.first() {
        rows.push(Row { line, values: pending.drain(..).map(|(_, v)| v).collect() });
    }
}

/// Splits `mpc.name = rhs` into `(name, rhs)`.
fn assignment(stmt: &str) -> Option<(&str, &str)> {
    let rest = stmt.strip_prefix("mpc.")?;
    let (name, rhs) = rest.split_once('=')?;
    Some((name.trim(), rhs.trim()))
}

struct RawCase {
    name: String,
    base_mva: Option<(usize, f64)>,
    matrices: HashMap<String, (usize, Matrix)>,
}

fn tokenize(source: &str) -> Result<RawCase> {
    let mut raw = RawCase { name: String::new(), base_mva: None, matrices: HashMap::new() };
    let mut state = State::Idle;

    for (idx, full_line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(full_line).trim();

        state = match state {
            State::Matrix { name, start_line, mut rows, mut pending } => {
                if let Some(end) = line.find(']') {
                    push_matrix_text(&line[..end], line_no, &mut rows, &mut pending)?;
                    raw.matrices.insert(name, (start_line, Matrix { rows }));
                    State::Idle
                } else {
                    push_matrix_text(line, line_no, &mut rows, &mut pending)?;
                    State::Matrix { name, start_line, rows, pending }
                }
            }
            State::Cell { name, start_line } => {
                if line.contains('}') {
                    log::debug!("ignoring cell array mpc.{name} (line {start_line})");
                    State::Idle
                } else {
                    State::Cell { name, start_line }
                }
            }
            State::Idle => {
                if line.is_empty() || line == "end" || line == "return" || line == "return;" {
                    State::Idle
                } else if let Some(rest) = line.strip_prefix("function") {
                    if let Some((_, fname)) = rest.split_once('=') {
                        raw.name = fname.trim().trim_end_matches(';').to_string();
                    }
                    State::Idle
                } else if let Some((name, rhs)) = assignment(line) {
                    if let Some(body) = rhs.strip_prefix('[') {
                        let mut rows = Vec::new();
                        let mut pending = Vec::new();
                        if let Some(end) = body.find(']') {
                            push_matrix_text(&body[..end], line_no, &mut rows, &mut pending)?;
                            raw.matrices.insert(name.to_string(), (line_no, Matrix { rows }));
                            State::Idle
                        } else {
                            push_matrix_text(body, line_no, &mut rows, &mut pending)?;
                            State::Matrix { name: name.to_string(), start_line: line_no, rows, pending }
                        }
                    } else if rhs.starts_with('{') {
                        if rhs.contains('}') {
                            log::debug!("ignoring cell array mpc.{name} (line {line_no})");
                            State::Idle
                        } else {
                            State::Cell { name: name.to_string(), start_line: line_no }
                        }
                    } else if name == "baseMVA" {
                        let value = rhs.trim_end_matches(';').trim();
                        raw.base_mva = Some((line_no, parse_number(value, line_no)?));
                        State::Idle
                    } else {
                        State::Idle
                    }
                } else {
                    return Err(Error::MalformedCase {
                        line: line_no,
                        message: format!("unrecognised statement '{line}'"),
                    });
                }
            }
        };
    }

    match state {
        State::Idle => Ok(raw),
        State::Matrix { name, start_line, .. } | State::Cell { name, start_line } => Err(Error::MalformedCase {
            line: start_line,
            message: format!("mpc.{name} is not terminated"),
        }),
    }
}

fn require_cols(row: &Row, min: usize, table: &str) -> Result<()> {
    if row.values.len() < min {
        return Err(Error::MalformedCase {
            line: row.line,
            message: format!("{table} row has {} columns, need at least {min}", row.values.len()),
        });
    }
    Ok(())
}

fn bus_id(value: f64, line: usize) -> Result<usize> {
    if value.fract() != 0.0 || value < 1.0 || !value.is_finite() {
        return Err(Error::MalformedCase { line, message: format!("invalid bus id {value}") });
    }
    Ok(value as usize)
}

/// Parses a MATPOWER-style case into a per-unit [`Case`].
pub fn parse_case(source: &str) -> Result<Case> {
    let mut raw = tokenize(source)?;
    let eof = source.lines().count() + 1;

    let (_, base_mva) = raw.base_mva.ok_or(Error::MalformedCase {
        line: eof,
        message: "missing mpc.baseMVA".into(),
    })?;
    if !(base_mva > 0.0) {
        return Err(Error::NonPositiveBase(base_mva));
    }
    let mut take = |name: &str| {
        raw.matrices.remove(name).map(|(_, m)| m).ok_or_else(|| Error::MalformedCase {
            line: eof,
            message: format!("missing mpc.{name} table"),
        })
    };
    let bus_table = take("bus")?;
    let gen_table = take("gen")?;
    let branch_table = take("branch")?;
    let mut ignored: Vec<_> = raw.matrices.keys().cloned().collect();
    ignored.sort();
    for name in ignored {
        if KNOWN_UNUSED.contains(&name.as_str()) {
            log::debug!("ignoring table mpc.{name}");
        } else {
            log::warn!("ignoring unsupported table mpc.{name}");
        }
    }

    let mut buses = Vec::with_capacity(bus_table.rows.len());
    let mut index: HashMap<usize, usize> = HashMap::new();
    for row in &bus_table.rows {
        require_cols(row, BUS_MIN_COLS, "bus")?;
        let v = &row.values;
        let id = bus_id(v[BUS_I], row.line)?;
        if index.insert(id, buses.len()).is_some() {
            return Err(Error::DuplicateBusId(id));
        }
        let bus_type = match v[BUS_TYPE] as i64 {
            _ if v[BUS_TYPE].fract() != 0.0 => None,
            1 => Some(BusType::PQ),
            2 => Some(BusType::PV),
            3 => Some(BusType::Slack),
            _ => None,
        }
        .ok_or_else(|| Error::MalformedCase {
            line: row.line,
            message: format!("unsupported bus type {}", v[BUS_TYPE]),
        })?;
        buses.push(Bus {
            id,
            bus_type,
            p_demand: v[PD] / base_mva,
            q_demand: v[QD] / base_mva,
            p_generation: 0.0,
            q_generation: 0.0,
            shunt_conductance: v[GS] / base_mva,
            shunt_susceptance: v[BS] / base_mva,
            v_setpoint: v[VM],
            v_angle_setpoint: v[VA].to_radians(),
        });
    }

    let mut regulated = vec![false; buses.len()];
    for row in &gen_table.rows {
        require_cols(row, GEN_MIN_COLS, "gen")?;
        let v = &row.values;
        let id = bus_id(v[GEN_BUS], row.line)?;
        let &i = index.get(&id).ok_or_else(|| Error::MalformedCase {
            line: row.line,
            message: format!("generator at unknown bus {id}"),
        })?;
        if v[GEN_STATUS] <= 0.0 {
            continue;
        }
        let bus = &mut buses[i];
        bus.p_generation += v[PG] / base_mva;
        bus.q_generation += v[QG] / base_mva;
        // the generator's voltage setpoint governs regulated buses; first one wins
        if bus.bus_type != BusType::PQ && !regulated[i] {
            bus.v_setpoint = v[VG];
            regulated[i] = true;
        }
    }

    let mut branches = Vec::with_capacity(branch_table.rows.len());
    for row in &branch_table.rows {
        require_cols(row, BRANCH_MIN_COLS, "branch")?;
        let v = &row.values;
        let from_bus = bus_id(v[F_BUS], row.line)?;
        let to_bus = bus_id(v[T_BUS], row.line)?;
        for id in [from_bus, to_bus] {
            if !index.contains_key(&id) {
                return Err(Error::MalformedCase {
                    line: row.line,
                    message: format!("branch references unknown bus {id}"),
                });
            }
        }
        branches.push(Branch {
            from_bus,
            to_bus,
            series_resistance: v[BR_R],
            series_reactance: v[BR_X],
            total_charging_susceptance: v[BR_B],
            tap_ratio: if v[TAP] == 0.0 { 1.0 } else { v[TAP] },
            phase_shift: v[SHIFT].to_radians(),
            status: v[BR_STATUS] > 0.0,
        });
    }

    let case = Case { name: raw.name, base_mva, buses, branches };
    case.check_invariants()?;
    Ok(case)
}
