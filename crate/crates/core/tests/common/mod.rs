//! Independent reference implementations used by the integration and
//! acceptance tests. Nothing here calls into the solver internals beyond
//! reading a parsed `Case`.

#![allow(dead_code)]

use std::path::PathBuf;

use num_complex::Complex64;
use tvflow::{BusType, Case, InjectionTarget, Network, NewtonOptions, SlopeVector, VoltageState};

pub fn data_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn load_case(name: &str) -> Case {
    Case::from_file(data_path(&format!("cases/{name}"))).expect("bundled case parses")
}

pub fn load_network(name: &str) -> Network {
    Network::new(load_case(name)).expect("bundled case builds")
}

/// Dense admittance matrix assembled branch by branch from the 2x2
/// two-port form `[[y + jb/2, -y], [-y, y + jb/2]]`, transformed by the tap.
pub fn stamp_ybus(case: &Case) -> Vec<Vec<Complex64>> {
    let n = case.buses.len();
    let pos = |id: usize| case.buses.iter().position(|b| b.id == id).unwrap();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for br in case.branches.iter().filter(|b| b.status) {
        let (r, x) = (br.series_resistance, br.series_reactance);
        let denom = r * r + x * x;
        let series = Complex64::new(r / denom, -x / denom);
        let half_b = Complex64::new(0.0, br.total_charging_susceptance * 0.5);
        let (c, s) = (br.phase_shift.cos(), br.phase_shift.sin());
        let a = Complex64::new(br.tap_ratio * c, br.tap_ratio * s);
        let a_conj = Complex64::new(a.re, -a.im);
        let (f, t) = (pos(br.from_bus), pos(br.to_bus));
        y[f][f] += (series + half_b) / (a * a_conj);
        y[f][t] -= series / a_conj;
        y[t][f] -= series / a;
        y[t][t] += series + half_b;
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y[i][i] += Complex64::new(bus.shunt_conductance, bus.shunt_susceptance);
    }
    y
}

/// Complex power injections `V conj(Y V)`.
pub fn power_injections(y: &[Vec<Complex64>], v: &[Complex64]) -> Vec<Complex64> {
    (0..v.len())
        .map(|i| {
            let current: Complex64 = y[i].iter().zip(v).map(|(a, b)| a * b).sum();
            v[i] * current.conj()
        })
        .collect()
}

pub struct GaussSeidel {
    pub voltages: Vec<Complex64>,
    pub sweeps: usize,
    pub last_step: f64,
}

/// Gauss-Seidel from a flat start. PV buses take the reactive power implied
/// by the current iterate and are rescaled to their setpoint magnitude
/// after every update. Stops when the largest voltage change in a sweep is
/// at most `tol`.
pub fn gauss_seidel(case: &Case, p: &[f64], q: &[f64], tol: f64, max_sweeps: usize) -> GaussSeidel {
    let y = stamp_ybus(case);
    let n = case.buses.len();
    let neighbours: Vec<Vec<(usize, Complex64)>> = (0..n)
        .map(|i| (0..n).filter(|&j| j != i && y[i][j].norm() > 0.0).map(|j| (j, y[i][j])).collect())
        .collect();
    let mut v: Vec<Complex64> = case
        .buses
        .iter()
        .map(|b| match b.bus_type {
            BusType::Slack => Complex64::from_polar(b.v_setpoint, b.v_angle_setpoint),
            BusType::PV => Complex64::new(b.v_setpoint, 0.0),
            BusType::PQ => Complex64::new(1.0, 0.0),
        })
        .collect();
    let mut sweeps = 0;
    let mut last_step = f64::INFINITY;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut step: f64 = 0.0;
        for i in 0..n {
            let bus = &case.buses[i];
            if bus.bus_type == BusType::Slack {
                continue;
            }
            let off: Complex64 = neighbours[i].iter().map(|(j, yij)| yij * v[*j]).sum();
            let q_i = match bus.bus_type {
                BusType::PV => -(v[i].conj() * (off + y[i][i] * v[i])).im,
                _ => q[i],
            };
            let s_conj = Complex64::new(p[i], -q_i);
            let mut updated = (s_conj / v[i].conj() - off) / y[i][i];
            if bus.bus_type == BusType::PV {
                updated *= bus.v_setpoint / updated.norm();
            }
            step = step.max((updated - v[i]).norm());
            v[i] = updated;
        }
        last_step = step;
        if step <= tol {
            break;
        }
    }
    GaussSeidel { voltages: v, sweeps, last_step }
}

/// Per-bus specified injections from the case data, bus-indexed.
pub fn case_injections(case: &Case) -> (Vec<f64>, Vec<f64>) {
    (
        case.buses.iter().map(|b| b.p_generation - b.p_demand).collect(),
        case.buses.iter().map(|b| b.q_generation - b.q_demand).collect(),
    )
}

/// Largest residual of the specified quantities, computed from complex powers.
pub fn mismatch_inf(case: &Case, v: &[Complex64]) -> f64 {
    let y = stamp_ybus(case);
    let s = power_injections(&y, v);
    let (p, q) = case_injections(case);
    let mut worst: f64 = 0.0;
    for (i, bus) in case.buses.iter().enumerate() {
        match bus.bus_type {
            BusType::Slack => {}
            BusType::PV => {
                worst = worst.max((s[i].re - p[i]).abs());
                worst = worst.max((v[i].norm_sqr() - bus.v_setpoint * bus.v_setpoint).abs());
            }
            BusType::PQ => {
                worst = worst.max((s[i].re - p[i]).abs());
                worst = worst.max((s[i].im - q[i]).abs());
            }
        }
    }
    worst
}

/// Target moved along `slope` for `dt` hours, outside any interval bounds.
pub fn target_along(y0: &InjectionTarget, slope: &SlopeVector, dt: f64) -> InjectionTarget {
    InjectionTarget {
        p: y0.p.iter().zip(&slope.k_p).map(|(a, k)| a + dt * k).collect(),
        q: y0.q.iter().zip(&slope.k_q).map(|(a, k)| a + dt * k).collect(),
        pv_vsq: y0.pv_vsq.clone(),
    }
}

pub fn tight_newton() -> NewtonOptions {
    NewtonOptions { tolerance: 1e-12, max_iterations: 50 }
}

fn solve_shifted(net: &Network, y0: &InjectionTarget, slope: &SlopeVector, start: &VoltageState, dt: f64) -> Vec<f64> {
    net.solve(&target_along(y0, slope, dt), start, &tight_newton())
        .expect("oracle solve converges")
        .state
        .stacked()
}

/// Fourth-order central differences of exact solves:
/// first and second time derivatives at `dt = 0`.
pub fn finite_difference_derivatives(
    net: &Network,
    y0: &InjectionTarget,
    slope: &SlopeVector,
    start: &VoltageState,
    h: f64,
) -> (Vec<f64>, Vec<f64>) {
    let xm2 = solve_shifted(net, y0, slope, start, -2.0 * h);
    let xm1 = solve_shifted(net, y0, slope, start, -h);
    let x0 = solve_shifted(net, y0, slope, start, 0.0);
    let xp1 = solve_shifted(net, y0, slope, start, h);
    let xp2 = solve_shifted(net, y0, slope, start, 2.0 * h);
    let d1 = (0..x0.len())
        .map(|i| (xm2[i] - 8.0 * xm1[i] + 8.0 * xp1[i] - xp2[i]) / (12.0 * h))
        .collect();
    let d2 = (0..x0.len())
        .map(|i| (-xm2[i] + 16.0 * xm1[i] - 30.0 * x0[i] + 16.0 * xp1[i] - xp2[i]) / (12.0 * h * h))
        .collect();
    (d1, d2)
}

pub fn relative_error(approx: &[f64], exact: &[f64]) -> f64 {
    let diff: f64 = approx.iter().zip(exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = exact.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / scale
}

/// Gauss-Jordan inverse with full pivoting.
pub fn gauss_jordan_inverse(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let mut col_perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pi, mut pj, mut best) = (k, k, 0.0);
        for i in k..n {
            for j in k..n {
                if m[i][j].abs() > best {
                    best = m[i][j].abs();
                    pi = i;
                    pj = j;
                }
            }
        }
        assert!(best > 0.0, "singular matrix");
        m.swap(k, pi);
        if pj != k {
            for row in m.iter_mut() {
                row.swap(k, pj);
            }
            col_perm.swap(k, pj);
        }
        let pivot = m[k][k];
        for v in m[k].iter_mut() {
            *v /= pivot;
        }
        let pivot_row = m[k].clone();
        for (i, row) in m.iter_mut().enumerate() {
            if i != k && row[k] != 0.0 {
                let f = row[k];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
    }
    // undo the column permutation: rows of the inverse follow it
    let mut inv = vec![vec![0.0; n]; n];
    for (k, &orig) in col_perm.iter().enumerate() {
        inv[orig] = m[k][n..].to_vec();
    }
    inv
}

/// Largest singular value from the eigenvalues of `AᵀA` by Jacobi rotations.
pub fn largest_singular_value(a: &[Vec<f64>]) -> f64 {
    let n = a[0].len();
    let mut s: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| a.iter().map(|row| row[i] * row[j]).sum()).collect())
        .collect();
    for _ in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += s[p][q] * s[p][q];
                if s[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (s[q][q] - s[p][p]) / (2.0 * s[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (skp, skq) = (s[k][p], s[k][q]);
                    s[k][p] = c * skp - sn * skq;
                    s[k][q] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let (spk, sqk) = (s[p][k], s[q][k]);
                    s[p][k] = c * spk - sn * sqk;
                    s[q][k] = sn * spk + c * sqk;
                }
            }
        }
        if off < 1e-30 {
            break;
        }
    }
    (0..n).map(|i| s[i][i]).fold(0.0, f64::max).sqrt()
}
