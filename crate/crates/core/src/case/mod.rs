//! Network case model: buses, branches, and validation.
//!
//! All electrical quantities are stored in per-unit on the system base and
//! angles in radians; conversion happens once, at parse time.

mod parse;
mod ybus;

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use parse::parse_case;
pub use ybus::{build_ybus, AdmittanceMatrix, PiAdmittance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BusType {
    Slack,
    PV,
    PQ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: usize,
    pub bus_type: BusType,
    /// Load, per-unit.
    pub p_demand: f64,
    pub q_demand: f64,
    /// Sum of in-service generator output at this bus, per-unit.
    pub p_generation: f64,
    pub q_generation: f64,
    pub shunt_conductance: f64,
    pub shunt_susceptance: f64,
    pub v_setpoint: f64,
    /// Radians; only used for the slack bus.
    pub v_angle_setpoint: f64,
}

impl Bus {
    /// Net active injection (generation minus load).
    pub fn p_injection(&self) -> f64 {
        self.p_generation - self.p_demand
    }

    pub fn q_injection(&self) -> f64 {
        self.q_generation - self.q_demand
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub series_resistance: f64,
    pub series_reactance: f64,
    pub total_charging_susceptance: f64,
    /// 1.0 for a plain line.
    pub tap_ratio: f64,
    /// Radians.
    pub phase_shift: f64,
    pub status: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Case {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
}

/// Warnings produced by [`Case::validate`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    /// Bus ids of every connected component that does not contain the slack.
    pub islands: Vec<Vec<usize>>,
}

impl ValidationReport {
    pub fn is_connected(&self) -> bool {
        self.islands.is_empty()
    }
}

impl Case {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Case> {
        let path = path.as_ref();
        let source = std::fs::read_to_string(path)?;
        let mut case = parse_case(&source)?;
        if case.name.is_empty() {
            case.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(case)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(source: &str) -> Result<Case> {
        let case: Case = serde_json::from_str(source)?;
        case.check_invariants()?;
        Ok(case)
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Map from external bus id to position in `buses`.
    pub fn index_map(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_index(&self) -> Result<usize> {
        self.buses
            .iter()
            .position(|b| b.bus_type == BusType::Slack)
            .ok_or(Error::MissingSlack)
    }

    /// Hard invariants; violating any of these makes the case unusable.
    pub fn check_invariants(&self) -> Result<()> {
        if !(self.base_mva > 0.0) {
            return Err(Error::NonPositiveBase(self.base_mva));
        }
        let mut seen = HashMap::new();
        for bus in &self.buses {
            if seen.insert(bus.id, ()).is_some() {
                return Err(Error::DuplicateBusId(bus.id));
            }
        }
        let slacks: Vec<usize> = self
            .buses
            .iter()
            .filter(|b| b.bus_type == BusType::Slack)
            .map(|b| b.id)
            .collect();
        match slacks.len() {
            0 => return Err(Error::MissingSlack),
            1 => {}
            _ => return Err(Error::MultipleSlack(slacks)),
        }
        for bus in &self.buses {
            if bus.bus_type != BusType::PQ && !(bus.v_setpoint > 0.0) {
                return Err(Error::InvalidCase(format!(
                    "bus {} has non-positive voltage setpoint {}",
                    bus.id, bus.v_setpoint
                )));
            }
        }
        for (k, br) in self.branches.iter().enumerate() {
            if !seen.contains_key(&br.from_bus) || !seen.contains_key(&br.to_bus) {
                return Err(Error::InvalidCase(format!(
                    "branch {k} references unknown bus ({}-{})",
                    br.from_bus, br.to_bus
                )));
            }
            if br.from_bus == br.to_bus {
                return Err(Error::InvalidCase(format!(
                    "branch {k} connects bus {} to itself",
                    br.from_bus
                )));
            }
            if br.status && !(br.tap_ratio > 0.0) {
                return Err(Error::InvalidCase(format!(
                    "branch {k} has non-positive tap ratio {}",
                    br.tap_ratio
                )));
            }
        }
        Ok(())
    }

    /// Topology checks that warn rather than fail.
    pub fn validate(&self) -> Result<ValidationReport> {
        self.check_invariants()?;
        let index = self.index_map();
        let n = self.buses.len();
        let mut adjacency = vec![Vec::new(); n];
        for br in self.branches.iter().filter(|b| b.status) {
            let (f, t) = (index[&br.from_bus], index[&br.to_bus]);
            adjacency[f].push(t);
            adjacency[t].push(f);
        }

        let slack = self.slack_index()?;
        let mut component = vec![usize::MAX; n];
        let mut islands = Vec::new();
        let order = std::iter::once(slack).chain((0..n).filter(|&i| i != slack));
        for (label, start) in order.enumerate() {
            if component[start] != usize::MAX {
                continue;
            }
            let mut members = Vec::new();
            let mut queue = VecDeque::from([start]);
            component[start] = label;
            while let Some(i) = queue.pop_front() {
                members.push(self.buses[i].id);
                for &j in &adjacency[i] {
                    if component[j] == usize::MAX {
                        component[j] = label;
                        queue.push_back(j);
                    }
                }
            }
            if start != slack {
                members.sort_unstable();
                islands.push(members);
            }
        }
        for island in &islands {
            log::warn!("case {}: buses {:?} are not connected to the slack bus", self.name, island);
        }
        Ok(ValidationReport { islands })
    }
}

/// Positions of slack, PV and PQ buses within `Case::buses`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BusSets {
    pub n_bus: usize,
    pub slack: usize,
    /// All non-slack buses in case order.
    pub non_slack: Vec<usize>,
    pub pv: Vec<usize>,
    pub pq: Vec<usize>,
    /// Position of each bus within `non_slack`, `None` for the slack.
    pub column: Vec<Option<usize>>,
}

impl BusSets {
    pub fn from_case(case: &Case) -> Result<BusSets> {
        let slack = case.slack_index()?;
        let mut non_slack = Vec::new();
        let mut pv = Vec::new();
        let mut pq = Vec::new();
        for (i, bus) in case.buses.iter().enumerate() {
            match bus.bus_type {
                BusType::Slack => {}
                BusType::PV => {
                    non_slack.push(i);
                    pv.push(i);
                }
                BusType::PQ => {
                    non_slack.push(i);
                    pq.push(i);
                }
            }
        }
        let mut column = vec![None; case.buses.len()];
        for (pos, &i) in non_slack.iter().enumerate() {
            column[i] = Some(pos);
        }
        Ok(BusSets { n_bus: case.buses.len(), slack, non_slack, pv, pq, column })
    }

    /// Number of unknowns, `2 (n - 1)`.
    pub fn unknowns(&self) -> usize {
        2 * self.non_slack.len()
    }
}
