//! Multi-interval trajectories: partition a piecewise-linear schedule,
//! solve the breakpoints along a warm-started chain, evaluate the combined
//! function inside every interval, and check the result against exact
//! solves.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::case::Case;
use crate::error::{Error, Result};
use crate::interval::{combined_tv, injections_at, linear_tv, solve_at, IntervalSolution, LinearTimeInterval};
use crate::derivatives::first_derivative_with;
use crate::powerflow::{InjectionTarget, Network, NewtonOptions, PowerFlowSolution, VoltageState};

pub const DEFAULT_POINTS_PER_INTERVAL: usize = 11;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Breakpoint {
    pub time: f64,
    pub target: InjectionTarget,
}

/// Injection targets at strictly increasing times; linear in between.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InjectionSchedule {
    pub breakpoints: Vec<Breakpoint>,
}

impl InjectionSchedule {
    pub fn new(breakpoints: Vec<Breakpoint>) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::Schedule(format!(
                "a schedule needs at least 2 breakpoints, got {}",
                breakpoints.len()
            )));
        }
        for (l, w) in breakpoints.windows(2).enumerate() {
            if !(w[1].time > w[0].time) {
                return Err(Error::NonMonotonicTimes(l + 1));
            }
            let (a, b) = (&w[0].target, &w[1].target);
            if a.p.len() != b.p.len() || a.q.len() != b.q.len() || a.pv_vsq.len() != b.pv_vsq.len() {
                return Err(Error::LayoutMismatch(format!("breakpoint {} differs in layout from breakpoint {l}", l + 1)));
            }
        }
        Ok(Self { breakpoints })
    }

    /// Holds `target` fixed over `[0, hours]` with `intervals` equal steps.
    pub fn constant(target: InjectionTarget, hours: f64, intervals: usize) -> Result<Self> {
        let m = intervals.max(1);
        Self::new(
            (0..=m)
                .map(|l| Breakpoint { time: hours * l as f64 / m as f64, target: target.clone() })
                .collect(),
        )
    }

    pub fn interval_count(&self) -> usize {
        self.breakpoints.len() - 1
    }

    pub fn times(&self) -> Vec<f64> {
        self.breakpoints.iter().map(|b| b.time).collect()
    }

    /// Inserts the linear midpoint of every interval.
    pub fn refined(&self) -> Result<Self> {
        let mut out = Vec::with_capacity(2 * self.breakpoints.len() - 1);
        for iv in partition(self)? {
            let mid = 0.5 * (iv.t_start + iv.t_end);
            out.push(Breakpoint { time: iv.t_start, target: iv.y_start.clone() });
            out.push(Breakpoint { time: mid, target: injections_at(&iv, mid)? });
        }
        out.push(self.breakpoints.last().cloned().ok_or(Error::EmptyInput)?);
        Self::new(out)
    }
}

pub fn partition(schedule: &InjectionSchedule) -> Result<Vec<LinearTimeInterval>> {
    schedule
        .breakpoints
        .windows(2)
        .enumerate()
        .map(|(l, w)| {
            LinearTimeInterval::new(w[0].time, w[1].time, w[0].target.clone(), w[1].target.clone()).map_err(|e| match e {
                Error::NonMonotonicTimes(_) => Error::NonMonotonicTimes(l + 1),
                other => other,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum InitialGuess {
    /// Setpoint magnitudes with zero angle.
    #[default]
    Flat,
    /// Real parts 0, imaginary parts 1 on non-slack buses.
    FlatLiteral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryOptions {
    pub newton: NewtonOptions,
    pub initial: InitialGuess,
    /// Start each breakpoint from the linear extrapolation of the previous
    /// one; otherwise every breakpoint starts from `initial`.
    pub warm_start: bool,
    pub points_per_interval: usize,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            newton: NewtonOptions::default(),
            initial: InitialGuess::Flat,
            warm_start: true,
            points_per_interval: DEFAULT_POINTS_PER_INTERVAL,
        }
    }
}

impl TrajectoryOptions {
    fn initial_state(&self, network: &Network, time: f64) -> VoltageState {
        let mut state = match self.initial {
            InitialGuess::Flat => VoltageState::flat_start(&network.case),
            InitialGuess::FlatLiteral => VoltageState::flat_start_literal(&network.case),
        };
        state.time = time;
        state
    }
}

/// Breakpoint solutions with the first derivatives on either side.
#[derive(Debug, Clone, PartialEq)]
pub struct BreakpointSolutions {
    pub solutions: Vec<PowerFlowSolution>,
    /// `left[l]`: derivative at breakpoint `l` under the slope of interval
    /// `l - 1`; `None` at the first breakpoint.
    pub left: Vec<Option<Vec<f64>>>,
    /// `right[l]`: derivative under the slope of interval `l`; `None` at the last.
    pub right: Vec<Option<Vec<f64>>>,
}

impl BreakpointSolutions {
    pub fn total_iterations(&self) -> usize {
        self.solutions.iter().map(|s| s.iterations).sum()
    }
}

/// Solves every breakpoint in time order. Both one-sided derivatives at a
/// breakpoint share one factorization.
pub fn solve_discrete_points(
    network: &Network,
    intervals: &[LinearTimeInterval],
    options: &TrajectoryOptions,
) -> Result<BreakpointSolutions> {
    if intervals.is_empty() {
        return Err(Error::EmptyInput);
    }
    let m = intervals.len();
    let mut solutions = Vec::with_capacity(m + 1);
    let mut left = Vec::with_capacity(m + 1);
    let mut right: Vec<Option<Vec<f64>>> = Vec::with_capacity(m + 1);
    for l in 0..=m {
        let (time, target) = if l < m {
            (intervals[l].t_start, &intervals[l].y_start)
        } else {
            (intervals[m - 1].t_end, &intervals[m - 1].y_end)
        };
        let guess = match (l, options.warm_start) {
            (0, _) | (_, false) => options.initial_state(network, time),
            _ => {
                let prev: &PowerFlowSolution = &solutions[l - 1];
                linear_tv(&prev.state, right[l - 1].as_deref().ok_or(Error::EmptyInput)?, time)
            }
        };
        let solution = solve_at(network, target, &guess, time, &options.newton).map_err(|e| match e {
            Error::NonConvergence { iterations, mismatch, .. } => Error::NonConvergence {
                iterations,
                mismatch,
                breakpoint: Some(l),
            },
            other => other,
        })?;
        let lu = network.jacobian(&solution.state)?.factorize()?;
        left.push(if l > 0 { Some(first_derivative_with(&lu, &intervals[l - 1].slope, &network.sets)?) } else { None });
        right.push(if l < m { Some(first_derivative_with(&lu, &intervals[l].slope, &network.sets)?) } else { None });
        solutions.push(solution);
    }
    Ok(BreakpointSolutions { solutions, left, right })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub interval_solutions: Vec<IntervalSolution>,
    pub points_per_interval: usize,
    /// `samples[l]` holds the combined-function states on the grid of interval `l`.
    pub samples: Vec<Vec<VoltageState>>,
    pub breakpoint_iterations: usize,
}

impl Trajectory {
    pub fn interval_count(&self) -> usize {
        self.interval_solutions.len()
    }

    pub fn sample_times(&self, l: usize) -> Vec<f64> {
        self.interval_solutions[l].interval.sample_times(self.points_per_interval)
    }

    /// First-order extrapolation from each interval start, on the same grid.
    pub fn linear_samples(&self) -> Vec<Vec<VoltageState>> {
        self.interval_solutions
            .iter()
            .map(|sol| {
                sol.interval
                    .sample_times(self.points_per_interval)
                    .into_iter()
                    .map(|t| linear_tv(&sol.x_start, &sol.d1_start, t))
                    .collect()
            })
            .collect()
    }

    /// Breakpoint states, `m + 1` of them.
    pub fn breakpoint_states(&self) -> Vec<&VoltageState> {
        let mut out: Vec<&VoltageState> = self.interval_solutions.iter().map(|s| &s.x_start).collect();
        if let Some(last) = self.interval_solutions.last() {
            out.push(&last.x_end);
        }
        out
    }
}

/// Builds every interval solution from shared breakpoint solves and evaluates
/// the combined function on an equidistant grid of `points_per_interval`
/// samples per interval.
pub fn run_time_varying(network: &Network, schedule: &InjectionSchedule, options: &TrajectoryOptions) -> Result<Trajectory> {
    if options.points_per_interval < 2 {
        return Err(Error::OutOfRange(format!(
            "points per interval must be at least 2, got {}",
            options.points_per_interval
        )));
    }
    let intervals = partition(schedule)?;
    let points = solve_discrete_points(network, &intervals, options)?;
    let interval_solutions = intervals
        .into_iter()
        .enumerate()
        .map(|(l, iv)| {
            IntervalSolution::from_parts(
                iv,
                points.solutions[l].state.clone(),
                points.solutions[l + 1].state.clone(),
                points.right[l].clone().ok_or(Error::EmptyInput)?,
                points.left[l + 1].clone().ok_or(Error::EmptyInput)?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = interval_solutions
        .par_iter()
        .map(|sol| {
            sol.interval
                .sample_times(options.points_per_interval)
                .into_iter()
                .map(|t| combined_tv(sol, t))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Trajectory {
        interval_solutions,
        points_per_interval: options.points_per_interval,
        samples,
        breakpoint_iterations: points.total_iterations(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchFlow {
    pub branch: usize,
    pub from_bus: usize,
    pub to_bus: usize,
    pub time: f64,
    pub s_from: Complex64,
    pub s_to: Complex64,
    pub i_from: Complex64,
    pub i_to: Complex64,
}

/// Terminal currents and complex powers of every branch, from the π-model.
/// Open branches report zero.
pub fn branch_flows(case: &Case, state: &VoltageState) -> Result<Vec<BranchFlow>> {
    if state.bus_count() != case.bus_count() {
        return Err(Error::DimensionMismatch {
            context: "branch_flows",
            expected: case.bus_count(),
            found: state.bus_count(),
        });
    }
    let index = case.index_map();
    let zero = Complex64::new(0.0, 0.0);
    case.branches
        .iter()
        .enumerate()
        .map(|(k, br)| {
            let mut flow = BranchFlow {
                branch: k,
                from_bus: br.from_bus,
                to_bus: br.to_bus,
                time: state.time,
                s_from: zero,
                s_to: zero,
                i_from: zero,
                i_to: zero,
            };
            if br.status {
                let pi = br.pi_admittance().ok_or(Error::ZeroImpedanceBranch {
                    index: k,
                    from: br.from_bus,
                    to: br.to_bus,
                })?;
                let vf = state.phasor(index[&br.from_bus]);
                let vt = state.phasor(index[&br.to_bus]);
                flow.i_from = pi.ff * vf + pi.ft * vt;
                flow.i_to = pi.tf * vf + pi.tt * vt;
                flow.s_from = vf * flow.i_from.conj();
                flow.s_to = vt * flow.i_to.conj();
            }
            Ok(flow)
        })
        .collect()
}

/// Exact solves on a trajectory's sample grid; `None` marks a sample whose
/// reference solve failed.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolutions {
    pub states: Vec<Vec<Option<VoltageState>>>,
    pub newton_iterations: usize,
}

/// Newton solves at every grid sample, chained within each interval from
/// the interval's start state. Intervals run concurrently.
pub fn reference_solutions(network: &Network, trajectory: &Trajectory, options: &NewtonOptions) -> ReferenceSolutions {
    let per_interval: Vec<(Vec<Option<VoltageState>>, usize)> = trajectory
        .interval_solutions
        .par_iter()
        .map(|sol| {
            let mut guess = sol.x_start.clone();
            let mut iterations = 0;
            let states = sol
                .interval
                .sample_times(trajectory.points_per_interval)
                .into_iter()
                .map(|t| {
                    let solved = injections_at(&sol.interval, t).and_then(|y| solve_at(network, &y, &guess, t, options));
                    match solved {
                        Ok(s) => {
                            iterations += s.iterations;
                            guess = s.state.clone();
                            Some(s.state)
                        }
                        Err(e) => {
                            log::warn!("reference solve failed at t = {t}: {e}");
                            None
                        }
                    }
                })
                .collect();
            (states, iterations)
        })
        .collect();
    let newton_iterations = per_interval.iter().map(|(_, it)| it).sum();
    ReferenceSolutions { states: per_interval.into_iter().map(|(s, _)| s).collect(), newton_iterations }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalError {
    pub interval: usize,
    pub max_err_real: f64,
    pub max_err_imag: f64,
    pub argmax_bus: usize,
    pub argmax_time: f64,
    /// Bus-sample comparisons actually made.
    pub comparisons: usize,
    pub failed_times: Vec<f64>,
}

impl IntervalError {
    pub fn max_err(&self) -> f64 {
        self.max_err_real.max(self.max_err_imag)
    }
}

/// Absolute errors at one sample, per bus.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleError {
    pub interval: usize,
    pub time: f64,
    pub err_real: Vec<f64>,
    pub err_imag: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub intervals: Vec<IntervalError>,
    pub global_max: f64,
    /// Comparisons with shared interval endpoints counted once.
    pub unique_comparisons: usize,
    pub failed_samples: usize,
    #[serde(skip)]
    pub samples: Vec<SampleError>,
}

impl ErrorReport {
    /// Compares `samples` (laid out like `Trajectory::samples`) with the
    /// reference solves.
    pub fn compare(case: &Case, samples: &[Vec<VoltageState>], reference: &ReferenceSolutions) -> Result<ErrorReport> {
        if samples.len() != reference.states.len() {
            return Err(Error::DimensionMismatch {
                context: "ErrorReport::compare",
                expected: reference.states.len(),
                found: samples.len(),
            });
        }
        let n = case.bus_count();
        let mut intervals = Vec::with_capacity(samples.len());
        let mut sample_errors = Vec::new();
        let mut unique = 0;
        let mut failed = 0;
        for (l, (row, refs)) in samples.iter().zip(&reference.states).enumerate() {
            let mut entry = IntervalError {
                interval: l,
                max_err_real: 0.0,
                max_err_imag: 0.0,
                argmax_bus: case.buses.first().map(|b| b.id).unwrap_or(0),
                argmax_time: row.first().map(|s| s.time).unwrap_or(0.0),
                comparisons: 0,
                failed_times: Vec::new(),
            };
            let mut worst = -1.0;
            for (j, (x, r)) in row.iter().zip(refs).enumerate() {
                let Some(r) = r else {
                    entry.failed_times.push(x.time);
                    failed += 1;
                    continue;
                };
                let err_real: Vec<f64> = (0..n).map(|i| (x.v_real[i] - r.v_real[i]).abs()).collect();
                let err_imag: Vec<f64> = (0..n).map(|i| (x.v_imag[i] - r.v_imag[i]).abs()).collect();
                for i in 0..n {
                    entry.max_err_real = entry.max_err_real.max(err_real[i]);
                    entry.max_err_imag = entry.max_err_imag.max(err_imag[i]);
                    let e = err_real[i].max(err_imag[i]);
                    if e > worst {
                        worst = e;
                        entry.argmax_bus = case.buses[i].id;
                        entry.argmax_time = x.time;
                    }
                }
                entry.comparisons += n;
                if l == 0 || j > 0 {
                    unique += n;
                }
                sample_errors.push(SampleError { interval: l, time: x.time, err_real, err_imag });
            }
            intervals.push(entry);
        }
        let global_max = intervals.iter().map(IntervalError::max_err).fold(0.0, f64::max);
        Ok(ErrorReport { intervals, global_max, unique_comparisons: unique, failed_samples: failed, samples: sample_errors })
    }

    /// Median of the per-interval maxima.
    pub fn median_interval_max(&self) -> f64 {
        let mut v: Vec<f64> = self.intervals.iter().map(IntervalError::max_err).collect();
        if v.is_empty() {
            return 0.0;
        }
        v.sort_by(f64::total_cmp);
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        }
    }
}

/// Reference solves plus comparison against the combined-function samples.
pub fn validate(network: &Network, trajectory: &Trajectory, options: &NewtonOptions) -> Result<ErrorReport> {
    let reference = reference_solutions(network, trajectory, options);
    ErrorReport::compare(&network.case, &trajectory.samples, &reference)
}
