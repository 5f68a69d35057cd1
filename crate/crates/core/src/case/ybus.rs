use num_complex::Complex64;

use super::{Branch, Case};
use crate::error::{Error, Result};

/// Two-port admittances of a branch π-model, `[i_f; i_t] = [[ff, ft]; [tf, tt]] [v_f; v_t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiAdmittance {
    pub ff: Complex64,
    pub ft: Complex64,
    pub tf: Complex64,
    pub tt: Complex64,
}

impl Branch {
    /// π-model with the off-nominal tap on the from side.
    pub fn pi_admittance(&self) -> Option<PiAdmittance> {
        let z = Complex64::new(self.series_resistance, self.series_reactance);
        if z.norm() == 0.0 {
            return None;
        }
        let ys = z.inv();
        let charging = Complex64::new(0.0, self.total_charging_susceptance / 2.0);
        let tap = Complex64::from_polar(self.tap_ratio, self.phase_shift);
        let ytt = ys + charging;
        Some(PiAdmittance {
            ff: ytt / (self.tap_ratio * self.tap_ratio),
            ft: -ys / tap.conj(),
            tf: -ys / tap,
            tt: ytt,
        })
    }
}

/// Dense complex bus admittance matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    dim: usize,
    entries: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, entries: vec![Complex64::new(0.0, 0.0); dim * dim] }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.entries[i * self.dim + j]
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.entries[i * self.dim..(i + 1) * self.dim]
    }

    fn add(&mut self, i: usize, j: usize, y: Complex64) {
        self.entries[i * self.dim + j] += y;
    }

    /// Complex current injections `Y v` for voltages given as real/imaginary parts.
    pub fn currents(&self, v_real: &[f64], v_imag: &[f64]) -> Vec<Complex64> {
        (0..self.dim)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v_real.iter().zip(v_imag))
                    .fold(Complex64::new(0.0, 0.0), |acc, (y, (&e, &f))| {
                        acc + Complex64::new(y.re * e - y.im * f, y.re * f + y.im * e)
                    })
            })
            .collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).norm() <= tol))
    }
}

/// Assembles the bus admittance matrix from branch π-models and bus shunts.
pub fn build_ybus(case: &Case) -> Result<AdmittanceMatrix> {
    let index = case.index_map();
    let mut y = AdmittanceMatrix::zeros(case.buses.len());
    for (k, br) in case.branches.iter().enumerate() {
        if !br.status {
            continue;
        }
        let pi = br.pi_admittance().ok_or(Error::ZeroImpedanceBranch {
            index: k,
            from: br.from_bus,
            to: br.to_bus,
        })?;
        let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
        y.add(f, f, pi.ff);
        y.add(f, t, pi.ft);
        y.add(t, f, pi.tf);
        y.add(t, t, pi.tt);
    }
    for (i, bus) in case.buses.iter().enumerate() {
        y.add(i, i, Complex64::new(bus.shunt_conductance, bus.shunt_susceptance));
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{Bus, BusType};

    fn bus(id: usize, bus_type: BusType) -> Bus {
        Bus {
            id,
            bus_type,
            p_demand: 0.0,
            q_demand: 0.0,
            p_generation: 0.0,
            q_generation: 0.0,
            shunt_conductance: 0.0,
            shunt_susceptance: 0.0,
            v_setpoint: 1.0,
            v_angle_setpoint: 0.0,
        }
    }

    fn line(from: usize, to: usize, r: f64, x: f64) -> Branch {
        Branch {
            from_bus: from,
            to_bus: to,
            series_resistance: r,
            series_reactance: x,
            total_charging_susceptance: 0.0,
            tap_ratio: 1.0,
            phase_shift: 0.0,
            status: true,
        }
    }

    fn two_bus(branch: Branch) -> Case {
        Case {
            name: "two".into(),
            base_mva: 100.0,
            buses: vec![bus(1, BusType::Slack), bus(2, BusType::PQ)],
            branches: vec![branch],
        }
    }

    #[test]
    fn single_line_two_bus() {
        let case = two_bus(line(1, 2, 0.01, 0.1));
        let y = build_ybus(&case).unwrap();
        let ys = Complex64::new(0.01, 0.1).inv();
        assert!((y.get(0, 0) - ys).norm() < 1e-14);
        assert!((y.get(1, 1) - ys).norm() < 1e-14);
        assert!((y.get(0, 1) + ys).norm() < 1e-14);
        assert!((y.get(1, 0) + ys).norm() < 1e-14);
    }

    #[test]
    fn open_branch_leaves_no_entry() {
        let mut br = line(1, 2, 0.01, 0.1);
        br.status = false;
        let y = build_ybus(&two_bus(br)).unwrap();
        assert_eq!(y.get(0, 1), Complex64::new(0.0, 0.0));
        assert_eq!(y.get(1, 0), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn zero_impedance_is_rejected() {
        let case = two_bus(line(1, 2, 0.0, 0.0));
        assert!(matches!(build_ybus(&case), Err(Error::ZeroImpedanceBranch { index: 0, .. })));
    }

    #[test]
    fn phase_shifter_breaks_symmetry() {
        let mut br = line(1, 2, 0.01, 0.1);
        br.phase_shift = 0.1;
        let y = build_ybus(&two_bus(br)).unwrap();
        assert!(!y.is_symmetric(1e-9));
    }

    #[test]
    fn tap_scales_from_side() {
        let mut br = line(1, 2, 0.0, 0.2);
        br.tap_ratio = 1.1;
        let y = build_ybus(&two_bus(br)).unwrap();
        let ys = Complex64::new(0.0, 0.2).inv();
        assert!((y.get(0, 0) - ys / 1.21).norm() < 1e-14);
        assert!((y.get(1, 1) - ys).norm() < 1e-14);
        assert!((y.get(0, 1) + ys / 1.1).norm() < 1e-14);
    }

    #[test]
    fn shunt_lands_on_diagonal() {
        let mut case = two_bus(line(1, 2, 0.01, 0.1));
        case.buses[1].shunt_susceptance = 0.3;
        let y = build_ybus(&case).unwrap();
        let ys = Complex64::new(0.01, 0.1).inv();
        assert!((y.get(1, 1) - ys - Complex64::new(0.0, 0.3)).norm() < 1e-14);
    }
}
