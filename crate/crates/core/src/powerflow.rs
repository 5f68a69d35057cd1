//! Rectangular-coordinate power equations, their Jacobian, and Newton-Raphson.
//!
//! Unknowns are ordered `[v_real over non-slack; v_imag over non-slack]`.
//! Residual rows are ordered `[P over non-slack; Q over PQ; |V|² over PV]`.
//! Every Jacobian entry is a linear function of the voltage vector it is
//! evaluated at, which is what lets the derivative recursion reuse the same
//! assembly routine on derivative vectors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::case::{build_ybus, AdmittanceMatrix, BusSets, BusType, Case};
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, LuFactorization};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_MAX_ITERATIONS: usize = 30;
pub const DIVERGENCE_LIMIT: f64 = 1e6;

/// Nodal voltages in rectangular form at a point in time (hours).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageState {
    pub v_real: Vec<f64>,
    pub v_imag: Vec<f64>,
    pub time: f64,
}

impl VoltageState {
    pub fn new(v_real: Vec<f64>, v_imag: Vec<f64>, time: f64) -> Result<Self> {
        if v_real.len() != v_imag.len() {
            return Err(Error::DimensionMismatch {
                context: "VoltageState::new",
                expected: v_real.len(),
                found: v_imag.len(),
            });
        }
        Ok(Self { v_real, v_imag, time })
    }

    /// `v_real = setpoint` on slack/PV buses, `1` elsewhere; `v_imag = 0`
    /// except for the slack, which sits at its angle setpoint.
    pub fn flat_start(case: &Case) -> Self {
        let mut v_real = Vec::with_capacity(case.buses.len());
        let mut v_imag = Vec::with_capacity(case.buses.len());
        for bus in &case.buses {
            match bus.bus_type {
                BusType::Slack => {
                    let v = Complex64::from_polar(bus.v_setpoint, bus.v_angle_setpoint);
                    v_real.push(v.re);
                    v_imag.push(v.im);
                }
                BusType::PV => {
                    v_real.push(bus.v_setpoint);
                    v_imag.push(0.0);
                }
                BusType::PQ => {
                    v_real.push(1.0);
                    v_imag.push(0.0);
                }
            }
        }
        Self { v_real, v_imag, time: 0.0 }
    }

    /// The alternative start with real parts 0 and imaginary parts 1 on
    /// every non-slack bus.
    pub fn flat_start_literal(case: &Case) -> Self {
        let mut state = Self::flat_start(case);
        for (i, bus) in case.buses.iter().enumerate() {
            if bus.bus_type != BusType::Slack {
                state.v_real[i] = 0.0;
                state.v_imag[i] = 1.0;
            }
        }
        state
    }

    pub fn bus_count(&self) -> usize {
        self.v_real.len()
    }

    /// `[v_real; v_imag]`
    pub fn stacked(&self) -> Vec<f64> {
        let mut x = self.v_real.clone();
        x.extend_from_slice(&self.v_imag);
        x
    }

    pub fn from_stacked(x: &[f64], time: f64) -> Self {
        let n = x.len() / 2;
        Self { v_real: x[..n].to_vec(), v_imag: x[n..].to_vec(), time }
    }

    /// `self + scale * direction` for a bus-stacked direction, at `time`.
    pub fn offset(&self, direction: &[f64], scale: f64, time: f64) -> Self {
        let n = self.bus_count();
        Self {
            v_real: (0..n).map(|i| self.v_real[i] + scale * direction[i]).collect(),
            v_imag: (0..n).map(|i| self.v_imag[i] + scale * direction[n + i]).collect(),
            time,
        }
    }

    pub fn magnitude(&self, i: usize) -> f64 {
        self.v_real[i].hypot(self.v_imag[i])
    }

    pub fn phasor(&self, i: usize) -> Complex64 {
        Complex64::new(self.v_real[i], self.v_imag[i])
    }

    /// Largest absolute difference over real and imaginary parts.
    pub fn max_abs_diff(&self, other: &VoltageState) -> f64 {
        self.v_real
            .iter()
            .zip(&other.v_real)
            .chain(self.v_imag.iter().zip(&other.v_imag))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Specified injections: `p` over non-slack buses, `q` over PQ buses and
/// squared voltage magnitudes over PV buses, each in `BusSets` order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionTarget {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub pv_vsq: Vec<f64>,
}

impl InjectionTarget {
    pub fn from_case(case: &Case, sets: &BusSets) -> Self {
        Self {
            p: sets.non_slack.iter().map(|&i| case.buses[i].p_injection()).collect(),
            q: sets.pq.iter().map(|&i| case.buses[i].q_injection()).collect(),
            pv_vsq: sets.pv.iter().map(|&i| case.buses[i].v_setpoint.powi(2)).collect(),
        }
    }

    pub fn check_layout(&self, sets: &BusSets) -> Result<()> {
        for (context, expected, found) in [
            ("InjectionTarget::p", sets.non_slack.len(), self.p.len()),
            ("InjectionTarget::q", sets.pq.len(), self.q.len()),
            ("InjectionTarget::pv_vsq", sets.pv.len(), self.pv_vsq.len()),
        ] {
            if expected != found {
                return Err(Error::DimensionMismatch { context, expected, found });
            }
        }
        Ok(())
    }

    /// `[p; q; pv_vsq]`, matching the residual row order.
    pub fn stacked(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.p.len() + self.q.len() + self.pv_vsq.len());
        y.extend_from_slice(&self.p);
        y.extend_from_slice(&self.q);
        y.extend_from_slice(&self.pv_vsq);
        y
    }

    /// Multiplies P and Q by `factor`; voltage setpoints are unchanged.
    pub fn scaled_injections(&self, factor: f64) -> Self {
        Self {
            p: self.p.iter().map(|v| v * factor).collect(),
            q: self.q.iter().map(|v| v * factor).collect(),
            pv_vsq: self.pv_vsq.clone(),
        }
    }
}

/// Square Jacobian of the residual with respect to the unknowns.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian(pub DenseMatrix);

impl Jacobian {
    pub fn dim(&self) -> usize {
        self.0.rows()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.0
    }

    pub fn factorize(&self) -> Result<LuFactorization> {
        LuFactorization::new(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerFlowSolution {
    pub state: VoltageState,
    pub iterations: usize,
    /// ∞-norm of the residual at `state`.
    pub final_mismatch: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BusVoltageRecord {
    pub bus: usize,
    pub v_real: f64,
    pub v_imag: f64,
    pub magnitude: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionRecord {
    pub case: String,
    pub converged: bool,
    pub iterations: usize,
    pub final_mismatch: f64,
    /// Angles in degrees.
    pub buses: Vec<BusVoltageRecord>,
}

impl PowerFlowSolution {
    pub fn to_record(&self, case: &Case) -> SolutionRecord {
        SolutionRecord {
            case: case.name.clone(),
            converged: self.converged,
            iterations: self.iterations,
            final_mismatch: self.final_mismatch,
            buses: case
                .buses
                .iter()
                .enumerate()
                .map(|(i, bus)| BusVoltageRecord {
                    bus: bus.id,
                    v_real: self.state.v_real[i],
                    v_imag: self.state.v_imag[i],
                    magnitude: self.state.magnitude(i),
                    angle: self.state.phasor(i).arg().to_degrees(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tolerance: DEFAULT_TOLERANCE, max_iterations: DEFAULT_MAX_ITERATIONS }
    }
}

fn check_state(v_real: &[f64], v_imag: &[f64], ybus: &AdmittanceMatrix, sets: &BusSets) -> Result<()> {
    for (context, found) in [("v_real", v_real.len()), ("v_imag", v_imag.len())] {
        if found != ybus.dim() || found != sets.n_bus {
            return Err(Error::DimensionMismatch { context, expected: ybus.dim(), found });
        }
    }
    Ok(())
}

/// Complex power injections `V ⊙ conj(Y V)` at every bus.
pub fn bus_injections(state: &VoltageState, ybus: &AdmittanceMatrix) -> Vec<Complex64> {
    ybus.currents(&state.v_real, &state.v_imag)
        .into_iter()
        .enumerate()
        .map(|(i, current)| state.phasor(i) * current.conj())
        .collect()
}

/// `h(x) - y` in residual row order.
pub fn power_mismatch(
    state: &VoltageState,
    target: &InjectionTarget,
    ybus: &AdmittanceMatrix,
    sets: &BusSets,
) -> Result<Vec<f64>> {
    check_state(&state.v_real, &state.v_imag, ybus, sets)?;
    target.check_layout(sets)?;
    let s = bus_injections(state, ybus);
    let mut out = Vec::with_capacity(sets.unknowns());
    out.extend(sets.non_slack.iter().zip(&target.p).map(|(&i, p)| s[i].re - p));
    out.extend(sets.pq.iter().zip(&target.q).map(|(&i, q)| s[i].im - q));
    out.extend(
        sets.pv
            .iter()
            .zip(&target.pv_vsq)
            .map(|(&i, vsq)| state.v_real[i].powi(2) + state.v_imag[i].powi(2) - vsq),
    );
    Ok(out)
}

/// Jacobian assembly evaluated at an arbitrary bus vector `(e, f)`.
pub(crate) fn jacobian_at(
    e: &[f64],
    f: &[f64],
    ybus: &AdmittanceMatrix,
    sets: &BusSets,
) -> Result<Jacobian> {
    check_state(e, f, ybus, sets)?;
    let ns = sets.non_slack.len();
    let m = 2 * ns;
    let mut jac = DenseMatrix::zeros(m, m);
    let currents = ybus.currents(e, f);

    let mut fill = |row: usize, i: usize, q_row: bool| {
        let yrow = ybus.row(i);
        let (ei, fi) = (e[i], f[i]);
        for (k, y) in yrow.iter().enumerate() {
            let Some(col) = sets.column[k] else { continue };
            let (g, b) = (y.re, y.im);
            let (de, df) = if q_row {
                (fi * g - ei * b, -fi * b - ei * g)
            } else {
                (ei * g + fi * b, -ei * b + fi * g)
            };
            jac[(row, col)] = de;
            jac[(row, ns + col)] = df;
        }
        let col = sets.column[i].expect("residual rows belong to non-slack buses");
        let (a, bb) = (currents[i].re, currents[i].im);
        if q_row {
            jac[(row, col)] -= bb;
            jac[(row, ns + col)] += a;
        } else {
            jac[(row, col)] += a;
            jac[(row, ns + col)] += bb;
        }
    };

    for (r, &i) in sets.non_slack.iter().enumerate() {
        fill(r, i, false);
    }
    for (r, &i) in sets.pq.iter().enumerate() {
        fill(ns + r, i, true);
    }
    let base = ns + sets.pq.len();
    for (r, &i) in sets.pv.iter().enumerate() {
        let col = sets.column[i].expect("PV buses are non-slack");
        jac[(base + r, col)] = 2.0 * e[i];
        jac[(base + r, ns + col)] = 2.0 * f[i];
    }
    Ok(Jacobian(jac))
}

/// Analytic Jacobian of [`power_mismatch`] at `state`.
pub fn assemble_jacobian(state: &VoltageState, ybus: &AdmittanceMatrix, sets: &BusSets) -> Result<Jacobian> {
    jacobian_at(&state.v_real, &state.v_imag, ybus, sets)
}

pub fn solve_linear(jacobian: &Jacobian, rhs: &[f64]) -> Result<Vec<f64>> {
    jacobian.factorize()?.solve(rhs)
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| if x.is_nan() { f64::NAN } else { acc.max(x.abs()) })
}

/// Newton-Raphson from `initial`; slack entries are never updated.
pub fn solve_powerflow(
    ybus: &AdmittanceMatrix,
    sets: &BusSets,
    target: &InjectionTarget,
    initial: &VoltageState,
    options: &NewtonOptions,
) -> Result<PowerFlowSolution> {
    let mut state = initial.clone();
    let ns = sets.non_slack.len();
    let mut iterations = 0;
    loop {
        let residual = power_mismatch(&state, target, ybus, sets)?;
        let mismatch = inf_norm(&residual);
        if mismatch <= options.tolerance {
            return Ok(PowerFlowSolution { state, iterations, final_mismatch: mismatch, converged: true });
        }
        if iterations >= options.max_iterations || !(mismatch <= DIVERGENCE_LIMIT) {
            return Err(Error::NonConvergence { iterations, mismatch, breakpoint: None });
        }
        let step = solve_linear(&assemble_jacobian(&state, ybus, sets)?, &residual)?;
        for (pos, &i) in sets.non_slack.iter().enumerate() {
            state.v_real[i] -= step[pos];
            state.v_imag[i] -= step[ns + pos];
        }
        iterations += 1;
    }
}

/// A case together with the derived quantities every solve needs.
#[derive(Debug, Clone)]
pub struct Network {
    pub case: Case,
    pub ybus: AdmittanceMatrix,
    pub sets: BusSets,
}

impl Network {
    pub fn new(case: Case) -> Result<Self> {
        let ybus = build_ybus(&case)?;
        let sets = BusSets::from_case(&case)?;
        Ok(Self { case, ybus, sets })
    }

    pub fn bus_count(&self) -> usize {
        self.sets.n_bus
    }

    pub fn base_target(&self) -> InjectionTarget {
        InjectionTarget::from_case(&self.case, &self.sets)
    }

    pub fn flat_start(&self) -> VoltageState {
        VoltageState::flat_start(&self.case)
    }

    pub fn solve(&self, target: &InjectionTarget, initial: &VoltageState, options: &NewtonOptions) -> Result<PowerFlowSolution> {
        solve_powerflow(&self.ybus, &self.sets, target, initial, options)
    }

    pub fn mismatch(&self, state: &VoltageState, target: &InjectionTarget) -> Result<Vec<f64>> {
        power_mismatch(state, target, &self.ybus, &self.sets)
    }

    pub fn jacobian(&self, state: &VoltageState) -> Result<Jacobian> {
        assemble_jacobian(state, &self.ybus, &self.sets)
    }
}
