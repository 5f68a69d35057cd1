//! Time derivatives of the voltage state under affine-in-time injections.
//!
//! Differentiating `h(x(t)) = y(t0) + (t - t0) k` gives `J x⁽¹⁾ = k` and,
//! because every Jacobian entry is linear in the voltage vector,
//! `J x⁽ᵈ⁾ = -Σ_{k=1}^{d-1} C(d-1, k) J(x⁽ᵏ⁾) x⁽ᵈ⁻ᵏ⁾` for `d ≥ 2`, where
//! `J(v)` is the Jacobian assembly applied to the vector `v`. All orders
//! share one factorization of `J(x(t))`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::case::{AdmittanceMatrix, BusSets, Case};
use crate::combinatorics::binomial;
use crate::error::{Error, Result};
use crate::linalg::LuFactorization;
use crate::powerflow::{assemble_jacobian, jacobian_at, Jacobian, VoltageState};

/// Rates of change of the specified injections, per hour. The PV rows
/// (squared magnitude setpoints) are constant in time and therefore zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeVector {
    pub k_p: Vec<f64>,
    pub k_q: Vec<f64>,
}

impl SlopeVector {
    pub fn zeros(sets: &BusSets) -> Self {
        Self { k_p: vec![0.0; sets.non_slack.len()], k_q: vec![0.0; sets.pq.len()] }
    }

    pub fn from_per_minute(k_p: Vec<f64>, k_q: Vec<f64>) -> Self {
        Self { k_p: k_p.iter().map(|v| v * 60.0).collect(), k_q: k_q.iter().map(|v| v * 60.0).collect() }
    }

    pub fn from_per_second(k_p: Vec<f64>, k_q: Vec<f64>) -> Self {
        Self {
            k_p: k_p.iter().map(|v| v * 3600.0).collect(),
            k_q: k_q.iter().map(|v| v * 3600.0).collect(),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            k_p: self.k_p.iter().map(|v| v * factor).collect(),
            k_q: self.k_q.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    pub fn is_zero(&self) -> bool {
        self.k_p.iter().chain(&self.k_q).all(|&v| v == 0.0)
    }

    /// `[k_p; k_q; 0 over PV]`, in residual row order.
    pub fn stacked(&self, sets: &BusSets) -> Result<Vec<f64>> {
        if self.k_p.len() != sets.non_slack.len() || self.k_q.len() != sets.pq.len() {
            return Err(Error::DimensionMismatch {
                context: "SlopeVector::stacked",
                expected: sets.non_slack.len() + sets.pq.len(),
                found: self.k_p.len() + self.k_q.len(),
            });
        }
        let mut k = Vec::with_capacity(sets.unknowns());
        k.extend_from_slice(&self.k_p);
        k.extend_from_slice(&self.k_q);
        k.resize(sets.unknowns(), 0.0);
        Ok(k)
    }
}

/// `derivatives[d - 1]` holds `x⁽ᵈ⁾` in bus-stacked `[re; im]` layout
/// (length `2n`, slack rows zero), in p.u. per hourᵈ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeSeries {
    pub time: f64,
    pub derivatives: Vec<Vec<f64>>,
}

impl DerivativeSeries {
    pub fn order_max(&self) -> usize {
        self.derivatives.len()
    }

    /// `x⁽ᵈ⁾` for `d ≥ 1`.
    pub fn order(&self, d: usize) -> Option<&[f64]> {
        d.checked_sub(1).and_then(|i| self.derivatives.get(i)).map(Vec::as_slice)
    }

    /// Writes `order,bus,v_real_deriv,v_imag_deriv`.
    pub fn write_csv<W: Write>(&self, case: &Case, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["order", "bus", "v_real_deriv", "v_imag_deriv"])?;
        let n = case.buses.len();
        for (k, x) in self.derivatives.iter().enumerate() {
            for (i, bus) in case.buses.iter().enumerate() {
                w.write_record(&[
                    (k + 1).to_string(),
                    bus.id.to_string(),
                    x[i].to_string(),
                    x[n + i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Scatters a solution over unknowns into the bus-stacked layout.
pub(crate) fn scatter(unknowns: &[f64], sets: &BusSets) -> Vec<f64> {
    let n = sets.n_bus;
    let ns = sets.non_slack.len();
    let mut x = vec![0.0; 2 * n];
    for (pos, &i) in sets.non_slack.iter().enumerate() {
        x[i] = unknowns[pos];
        x[n + i] = unknowns[ns + pos];
    }
    x
}

/// Picks the unknown entries out of a bus-stacked vector.
pub(crate) fn gather(x: &[f64], sets: &BusSets) -> Vec<f64> {
    let n = sets.n_bus;
    let mut u: Vec<f64> = sets.non_slack.iter().map(|&i| x[i]).collect();
    u.extend(sets.non_slack.iter().map(|&i| x[n + i]));
    u
}

/// The Jacobian assembly applied to a bus-stacked vector in place of a state.
pub fn jacobian_at_vector(v: &[f64], ybus: &AdmittanceMatrix, sets: &BusSets) -> Result<Jacobian> {
    if v.len() != 2 * sets.n_bus {
        return Err(Error::DimensionMismatch {
            context: "jacobian_at_vector",
            expected: 2 * sets.n_bus,
            found: v.len(),
        });
    }
    let n = sets.n_bus;
    jacobian_at(&v[..n], &v[n..], ybus, sets)
}

/// `x⁽¹⁾ = J⁻¹ k` at a solved state.
pub fn first_derivative(
    state: &VoltageState,
    slope: &SlopeVector,
    ybus: &AdmittanceMatrix,
    sets: &BusSets,
) -> Result<Vec<f64>> {
    let lu = assemble_jacobian(state, ybus, sets)?.factorize()?;
    first_derivative_with(&lu, slope, sets)
}

/// [`first_derivative`] against an existing factorization of `J(x(t))`.
pub fn first_derivative_with(lu: &LuFactorization, slope: &SlopeVector, sets: &BusSets) -> Result<Vec<f64>> {
    let k = slope.stacked(sets)?;
    Ok(scatter(&lu.solve(&k)?, sets))
}

/// Right-hand side `b_d` of the order-`d` system from orders `1..d-1`.
pub fn derivative_rhs(
    d: usize,
    lower: &[Vec<f64>],
    ybus: &AdmittanceMatrix,
    sets: &BusSets,
) -> Result<Vec<f64>> {
    if d < 2 {
        return Err(Error::InvalidOrder(d));
    }
    if lower.len() < d - 1 {
        return Err(Error::MissingLowerOrder(lower.len() + 1));
    }
    let mut b = vec![0.0; sets.unknowns()];
    for k in 1..d {
        let coeff = binomial(d as u64 - 1, k as u64)? as f64;
        let jk = jacobian_at_vector(&lower[k - 1], ybus, sets)?;
        let prod = jk.matrix().mul_vec(&gather(&lower[d - k - 1], sets))?;
        for (bi, p) in b.iter_mut().zip(prod) {
            *bi -= coeff * p;
        }
    }
    Ok(b)
}

/// `x⁽¹⁾ … x⁽ᴰ⁾` at a solved state, sharing one LU factorization.
pub fn derivative_series(
    state: &VoltageState,
    slope: &SlopeVector,
    ybus: &AdmittanceMatrix,
    sets: &BusSets,
    order_max: usize,
) -> Result<DerivativeSeries> {
    if order_max < 1 {
        return Err(Error::InvalidOrder(order_max));
    }
    let lu = assemble_jacobian(state, ybus, sets)?.factorize()?;
    let mut derivatives = Vec::with_capacity(order_max);
    derivatives.push(first_derivative_with(&lu, slope, sets)?);
    for d in 2..=order_max {
        let b = derivative_rhs(d, &derivatives, ybus, sets)?;
        derivatives.push(scatter(&lu.solve(&b)?, sets));
    }
    Ok(DerivativeSeries { time: state.time, derivatives })
}
