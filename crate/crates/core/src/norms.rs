//! Vector/matrix p-norms, condition numbers, and the derivative-norm
//! bounds and estimates built on them.
//!
//! For derivatives of the voltage state along an affine injection ramp,
//!
//! ```text
//! ‖x⁽ᵈ⁾‖ ≤ (2d-3)!! ρ^(d-1) ‖x⁽¹⁾‖ᵈ            (d ≥ 2)
//! ‖x⁽ᵈ⁾‖ ≈ (2d-3)!! (αρ)^(d-1) ‖x⁽¹⁾‖ᵈ
//! γ_d = ‖x⁽ᵈ⁾‖ / ‖x⁽ᵈ⁻¹⁾‖ ≈ (2d-3) αρ ‖x⁽¹⁾‖
//! ```
//!
//! where `ρ = ‖J‖ ‖J⁻¹‖`. Since `γ_d` grows linearly in `d`, the norm
//! sequence first falls and then rises; the order where `γ` crosses one is
//! the critical order.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::case::{AdmittanceMatrix, BusSets};
use crate::combinatorics::odd_double_factorial_for_order;
use crate::derivatives::{jacobian_at_vector, DerivativeSeries};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::powerflow::{assemble_jacobian, Jacobian, VoltageState};

pub const POWER_ITERATIONS: usize = 200;
pub const POWER_ITERATION_RTOL: f64 = 1e-10;
pub const ALPHA_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum NormKind {
    One,
    #[default]
    Two,
    Inf,
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "1" => Ok(NormKind::One),
            "2" => Ok(NormKind::Two),
            "inf" | "Inf" | "INF" => Ok(NormKind::Inf),
            _ => Err(Error::OutOfRange(format!("unknown norm '{s}', expected 1, 2 or inf"))),
        }
    }
}

pub fn vector_norm(v: &[f64], p: NormKind) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(match p {
        NormKind::One => v.iter().map(|x| x.abs()).sum(),
        NormKind::Two => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormKind::Inf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    })
}

/// Induced matrix norm. The 2-norm is the largest singular value, found by
/// power iteration on `MᵀM`.
pub fn matrix_norm(m: &DenseMatrix, p: NormKind) -> Result<f64> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(match p {
        NormKind::One => (0..m.cols())
            .map(|j| (0..m.rows()).map(|i| m[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::Inf => (0..m.rows())
            .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::Two => spectral_norm(m)?,
    })
}

fn spectral_norm(m: &DenseMatrix) -> Result<f64> {
    // deterministic start with no special alignment to any axis
    let mut v: Vec<f64> = (0..m.cols()).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7 + 0.3).sin()).collect();
    let mut sigma = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let norm_v = vector_norm(&v, NormKind::Two)?;
        if norm_v == 0.0 {
            return Ok(0.0);
        }
        v.iter_mut().for_each(|x| *x /= norm_v);
        let mv = m.mul_vec(&v)?;
        let next_sigma = vector_norm(&mv, NormKind::Two)?;
        let w = m.tr_mul_vec(&mv)?;
        let converged = (next_sigma - sigma).abs() <= POWER_ITERATION_RTOL * next_sigma;
        sigma = next_sigma;
        v = w;
        if converged {
            break;
        }
    }
    Ok(sigma)
}

/// `‖J‖ ‖J⁻¹‖` with the inverse formed explicitly from an LU factorization.
pub fn condition_number(jacobian: &Jacobian, p: NormKind) -> Result<f64> {
    let inverse = jacobian.factorize()?.inverse()?;
    Ok(matrix_norm(jacobian.matrix(), p)? * matrix_norm(&inverse, p)?)
}

/// One row of [`jacobian_norm_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JacobianNormCheck {
    pub order: usize,
    /// `‖J(x⁽ᵏ⁾)‖`
    pub lhs: f64,
    /// `‖J(x)‖ ‖x⁽ᵏ⁾‖`
    pub rhs: f64,
    /// `lhs / rhs`, or 0 when both vanish.
    pub ratio: f64,
}

/// Compares the norm of the Jacobian assembled on each derivative vector
/// against `‖J(x)‖ ‖x⁽ᵏ⁾‖`. The inequality is approximate, so this
/// reports rather than asserts.
pub fn jacobian_norm_check(
    state: &VoltageState,
    series: &DerivativeSeries,
    ybus: &AdmittanceMatrix,
    sets: &BusSets,
    p: NormKind,
) -> Result<Vec<JacobianNormCheck>> {
    let j_norm = matrix_norm(assemble_jacobian(state, ybus, sets)?.matrix(), p)?;
    series
        .derivatives
        .iter()
        .enumerate()
        .map(|(k, x)| {
            let lhs = matrix_norm(jacobian_at_vector(x, ybus, sets)?.matrix(), p)?;
            let rhs = j_norm * vector_norm(x, p)?;
            let ratio = if rhs == 0.0 { if lhs == 0.0 { 0.0 } else { f64::INFINITY } } else { lhs / rhs };
            Ok(JacobianNormCheck { order: k + 1, lhs, rhs, ratio })
        })
        .collect()
}

/// `(2d-3)!! ρ^(d-1) ‖x⁽¹⁾‖ᵈ`
pub fn derivative_norm_bound(d: usize, rho: f64, x1_norm: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidOrder(d));
    }
    let df = odd_double_factorial_for_order(d)? as f64;
    Ok(df * rho.powi(d as i32 - 1) * x1_norm.powi(d as i32))
}

/// Correction coefficient `α = ‖x⁽²⁾‖ / (ρ ‖x⁽¹⁾‖²)`, clamped into the
/// open unit interval, so the corrected estimate is exact at order 2.
pub fn fit_alpha(series: &DerivativeSeries, rho: f64, p: NormKind) -> Result<f64> {
    let (Some(x1), Some(x2)) = (series.order(1), series.order(2)) else {
        return Err(Error::InvalidOrder(series.order_max()));
    };
    let x1_norm = vector_norm(x1, p)?;
    if x1_norm == 0.0 {
        return Err(Error::ZeroFirstDerivative);
    }
    let alpha = vector_norm(x2, p)? / (rho * x1_norm * x1_norm);
    Ok(alpha.clamp(ALPHA_CLAMP, 1.0 - ALPHA_CLAMP))
}

/// `γ_d = (2d-3) ρ̃ ‖x⁽¹⁾‖` for `d = 2..=order_max`, and the largest such
/// `d` with `γ_d ≤ 1` (`None` when already `γ_2 > 1`).
pub fn gamma_and_critical(rho_corrected: f64, x1_norm: f64, order_max: usize) -> (Vec<f64>, Option<usize>) {
    let gamma: Vec<f64> = (2..=order_max)
        .map(|d| (2 * d - 3) as f64 * rho_corrected * x1_norm)
        .collect();
    let critical = gamma.iter().rposition(|&g| g <= 1.0).map(|i| i + 2);
    (gamma, critical)
}

/// Everything about the derivative norms at one time point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub p: NormKind,
    pub time: f64,
    /// `‖x⁽ᵈ⁾‖` for `d = 1..=D`.
    pub derivative_norms: Vec<f64>,
    pub rho: f64,
    pub rho_corrected: f64,
    pub alpha_t: f64,
    pub jacobian_norm: f64,
    pub inverse_norm: f64,
    /// Upper bounds for `d = 2..=D`.
    pub bounds: Vec<f64>,
    /// Corrected estimates for `d = 2..=D`.
    pub approx: Vec<f64>,
    /// `γ_d` for `d = 2..=D`.
    pub gamma: Vec<f64>,
    pub critical_order: Option<usize>,
    pub jacobian_checks: Vec<JacobianNormCheck>,
}

impl NormReport {
    pub fn build(
        state: &VoltageState,
        series: &DerivativeSeries,
        ybus: &AdmittanceMatrix,
        sets: &BusSets,
        p: NormKind,
    ) -> Result<NormReport> {
        let order_max = series.order_max();
        if order_max < 2 {
            return Err(Error::InvalidOrder(order_max));
        }
        let jac = assemble_jacobian(state, ybus, sets)?;
        let jacobian_norm = matrix_norm(jac.matrix(), p)?;
        let inverse_norm = matrix_norm(&jac.factorize()?.inverse()?, p)?;
        let rho = jacobian_norm * inverse_norm;
        let derivative_norms = series
            .derivatives
            .iter()
            .map(|x| vector_norm(x, p))
            .collect::<Result<Vec<_>>>()?;
        let x1_norm = derivative_norms[0];
        // a static interval has all derivatives zero; report zeros throughout
        let alpha_t = match fit_alpha(series, rho, p) {
            Err(Error::ZeroFirstDerivative) => 0.0,
            other => other?,
        };
        let rho_corrected = alpha_t * rho;
        let bounds = (2..=order_max)
            .map(|d| derivative_norm_bound(d, rho, x1_norm))
            .collect::<Result<Vec<_>>>()?;
        let approx = (2..=order_max)
            .map(|d| derivative_norm_bound(d, rho_corrected, x1_norm))
            .collect::<Result<Vec<_>>>()?;
        let (gamma, critical_order) = gamma_and_critical(rho_corrected, x1_norm, order_max);
        let jacobian_checks = jacobian_norm_check(state, series, ybus, sets, p)?;
        Ok(NormReport {
            p,
            time: state.time,
            derivative_norms,
            rho,
            rho_corrected,
            alpha_t,
            jacobian_norm,
            inverse_norm,
            bounds,
            approx,
            gamma,
            critical_order,
            jacobian_checks,
        })
    }

    /// Measured ratios `‖x⁽ᵈ⁾‖ / ‖x⁽ᵈ⁻¹⁾‖` for `d = 2..=D`.
    pub fn measured_ratios(&self) -> Vec<f64> {
        self.derivative_norms.windows(2).map(|w| w[1] / w[0]).collect()
    }

    /// Order of the smallest measured derivative norm.
    pub fn measured_minimum_order(&self) -> usize {
        self.derivative_norms
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) })
            .0
            + 1
    }

    /// Writes `order,measured_norm,norm_bound,norm_approx,gamma`; order 1 has
    /// empty bound/approx/gamma cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["order", "measured_norm", "norm_bound", "norm_approx", "gamma"])?;
        for (k, norm) in self.derivative_norms.iter().enumerate() {
            let d = k + 1;
            let cell = |v: &[f64]| if d >= 2 { v[d - 2].to_string() } else { String::new() };
            w.write_record(&[
                d.to_string(),
                norm.to_string(),
                cell(&self.bounds),
                cell(&self.approx),
                cell(&self.gamma),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// True when `values` strictly decreases to a single minimum and strictly
/// increases afterwards, with the minimum strictly inside the sequence.
pub fn is_u_shaped(values: &[f64]) -> bool {
    if values.len() < 3 {
        return false;
    }
    let Some(min_at) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
    else {
        return false;
    };
    if min_at == 0 || min_at == values.len() - 1 {
        return false;
    }
    values[..=min_at].windows(2).all(|w| w[1] < w[0]) && values[min_at..].windows(2).all(|w| w[1] > w[0])
}
