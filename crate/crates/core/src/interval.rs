//! Linear-time intervals and the voltage functions evaluated inside them.
//!
//! Within `[t0, te]` every specified injection is affine in time. Given the
//! solved endpoint states and their first derivatives, the voltages are
//! approximated either by first-order extrapolation from `t0`, or by the
//! blend
//!
//! ```text
//! x(t, t0) = x(t0) + Δt0 x'(t0) + ½ Δt0² x̄''
//! x(t, te) = x(te) + Δte x'(te) + ½ Δte² x̄''
//! x(t)     = (1 - a) x(t, t0) + a x(t, te),   a = Δt0 / ΔT
//! ```
//!
//! with `x̄'' = (x'(te) - x'(t0)) / ΔT`. `Δte = t - te` is non-positive
//! inside the interval.

use serde::Serialize;

use crate::derivatives::{first_derivative_with, SlopeVector};
use crate::error::{Error, Result};
use crate::powerflow::{InjectionTarget, Network, NewtonOptions, PowerFlowSolution, VoltageState};

/// Relative slack allowed when checking that a time lies inside an interval.
pub const TIME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearTimeInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub y_start: InjectionTarget,
    pub y_end: InjectionTarget,
    /// Per hour.
    pub slope: SlopeVector,
}

impl LinearTimeInterval {
    pub fn new(t_start: f64, t_end: f64, y_start: InjectionTarget, y_end: InjectionTarget) -> Result<Self> {
        if !(t_end > t_start) {
            return Err(Error::NonMonotonicTimes(1));
        }
        if y_start.p.len() != y_end.p.len() || y_start.q.len() != y_end.q.len() {
            return Err(Error::LayoutMismatch(format!(
                "interval endpoints carry {}/{} and {}/{} P/Q entries",
                y_start.p.len(),
                y_start.q.len(),
                y_end.p.len(),
                y_end.q.len()
            )));
        }
        if y_start.pv_vsq != y_end.pv_vsq {
            return Err(Error::LayoutMismatch("voltage setpoints change within an interval".into()));
        }
        let length = t_end - t_start;
        if length > 1.0 {
            log::warn!("interval [{t_start}, {t_end}] is longer than one hour");
        }
        let rate = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(a, b)| (b - a) / length).collect();
        let slope = SlopeVector { k_p: rate(&y_start.p, &y_end.p), k_q: rate(&y_start.q, &y_end.q) };
        Ok(Self { t_start, t_end, y_start, y_end, slope })
    }

    pub fn length(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// The same interval traversed backwards in time, on `[-t_end, -t_start]`.
    pub fn reversed(&self) -> Self {
        Self {
            t_start: -self.t_end,
            t_end: -self.t_start,
            y_start: self.y_end.clone(),
            y_end: self.y_start.clone(),
            slope: self.slope.negated(),
        }
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let slack = TIME_TOLERANCE * self.t_start.abs().max(self.t_end.abs()).max(1.0);
        if t < self.t_start - slack || t > self.t_end + slack || t.is_nan() {
            return Err(Error::TimeOutOfInterval { time: t, start: self.t_start, end: self.t_end });
        }
        Ok(t.clamp(self.t_start, self.t_end))
    }

    /// `S` equidistant times including both endpoints; the last is exactly `t_end`.
    pub fn sample_times(&self, points: usize) -> Vec<f64> {
        let step = self.length() / (points.max(2) - 1) as f64;
        (0..points.max(2))
            .map(|j| if j + 1 == points.max(2) { self.t_end } else { self.t_start + j as f64 * step })
            .collect()
    }
}

/// `y(t) = y(t0) + (t - t0) k` on P and Q; setpoints unchanged. The
/// endpoints are returned exactly.
pub fn injections_at(interval: &LinearTimeInterval, t: f64) -> Result<InjectionTarget> {
    let t = interval.check_time(t)?;
    if t == interval.t_end {
        return Ok(interval.y_end.clone());
    }
    let dt = t - interval.t_start;
    let step = |y: &[f64], k: &[f64]| y.iter().zip(k).map(|(y, k)| y + dt * k).collect();
    Ok(InjectionTarget {
        p: step(&interval.y_start.p, &interval.slope.k_p),
        q: step(&interval.y_start.q, &interval.slope.k_q),
        pv_vsq: interval.y_start.pv_vsq.clone(),
    })
}

/// `x(t) = x(t0) + (t - t0) x'(t0)`.
pub fn linear_tv(x0: &VoltageState, d1: &[f64], t: f64) -> VoltageState {
    x0.offset(d1, t - x0.time, t)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalSolution {
    pub interval: LinearTimeInterval,
    pub x_start: VoltageState,
    pub x_end: VoltageState,
    /// Bus-stacked `[re; im]`, per hour.
    pub d1_start: Vec<f64>,
    pub d1_end: Vec<f64>,
    /// Finite-difference second derivative shared by both expansions, per hour².
    pub d2_bar: Vec<f64>,
}

impl IntervalSolution {
    pub fn from_parts(
        interval: LinearTimeInterval,
        x_start: VoltageState,
        x_end: VoltageState,
        d1_start: Vec<f64>,
        d1_end: Vec<f64>,
    ) -> Result<Self> {
        let n2 = 2 * x_start.bus_count();
        for (context, found) in [
            ("IntervalSolution::x_end", 2 * x_end.bus_count()),
            ("IntervalSolution::d1_start", d1_start.len()),
            ("IntervalSolution::d1_end", d1_end.len()),
        ] {
            if found != n2 {
                return Err(Error::DimensionMismatch { context, expected: n2, found });
            }
        }
        let length = interval.length();
        let d2_bar = d1_start.iter().zip(&d1_end).map(|(a, b)| (b - a) / length).collect();
        Ok(Self { interval, x_start, x_end, d1_start, d1_end, d2_bar })
    }

    /// The mirrored solution on the reversed interval. First derivatives
    /// change sign and the second-derivative estimate is unchanged.
    pub fn reversed(&self) -> Self {
        let negate = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<f64>>();
        let mut x_start = self.x_end.clone();
        x_start.time = -self.x_end.time;
        let mut x_end = self.x_start.clone();
        x_end.time = -self.x_start.time;
        Self {
            interval: self.interval.reversed(),
            x_start,
            x_end,
            d1_start: negate(&self.d1_end),
            d1_end: negate(&self.d1_start),
            d2_bar: self.d2_bar.clone(),
        }
    }
}

/// Endpoint solves and first derivatives for one interval. The end solve is
/// warm-started by [`linear_tv`] from the start.
pub fn build_interval_solution(
    network: &Network,
    interval: &LinearTimeInterval,
    warm_start: &VoltageState,
    options: &NewtonOptions,
) -> Result<IntervalSolution> {
    let start = solve_at(network, &interval.y_start, warm_start, interval.t_start, options)?;
    let d1_start = derivative_at(network, &start.state, &interval.slope)?;
    let guess = linear_tv(&start.state, &d1_start, interval.t_end);
    let end = solve_at(network, &interval.y_end, &guess, interval.t_end, options)?;
    let d1_end = derivative_at(network, &end.state, &interval.slope)?;
    IntervalSolution::from_parts(interval.clone(), start.state, end.state, d1_start, d1_end)
}

pub(crate) fn solve_at(
    network: &Network,
    target: &InjectionTarget,
    initial: &VoltageState,
    time: f64,
    options: &NewtonOptions,
) -> Result<PowerFlowSolution> {
    let mut solution = network.solve(target, initial, options)?;
    solution.state.time = time;
    Ok(solution)
}

fn derivative_at(network: &Network, state: &VoltageState, slope: &SlopeVector) -> Result<Vec<f64>> {
    let lu = network.jacobian(state)?.factorize()?;
    first_derivative_with(&lu, slope, &network.sets)
}

/// The two-endpoint blended second-order function.
pub fn combined_tv(sol: &IntervalSolution, t: f64) -> Result<VoltageState> {
    let t = sol.interval.check_time(t)?;
    let dt0 = t - sol.interval.t_start;
    let dte = t - sol.interval.t_end;
    let alpha = dt0 / sol.interval.length();
    let n = sol.x_start.bus_count();
    let x0 = sol.x_start.stacked();
    let xe = sol.x_end.stacked();
    let x: Vec<f64> = (0..2 * n)
        .map(|i| {
            let from_start = x0[i] + dt0 * sol.d1_start[i] + 0.5 * dt0 * dt0 * sol.d2_bar[i];
            let from_end = xe[i] + dte * sol.d1_end[i] + 0.5 * dte * dte * sol.d2_bar[i];
            (1.0 - alpha) * from_start + alpha * from_end
        })
        .collect();
    Ok(VoltageState::from_stacked(&x, t))
}
