//! Time-varying AC power flow over piecewise-linear injection schedules.
//!
//! A schedule of nodal injections that is affine in time between
//! breakpoints is solved exactly (Newton-Raphson) only at the breakpoints.
//! Inside each interval the voltages are reconstructed from endpoint
//! states and first time-derivatives by a blended pair of second-order
//! Taylor expansions, one anchored at each end.

pub mod case;
pub mod combinatorics;
pub mod derivatives;
pub mod error;
pub mod interval;
pub mod io;
pub mod linalg;
pub mod norms;
pub mod powerflow;
pub mod scenario;
pub mod trajectory;

pub use error::{Error, Result};
pub use case::{build_ybus, AdmittanceMatrix, Branch, Bus, BusSets, BusType, Case};
pub use derivatives::{derivative_series, first_derivative, DerivativeSeries, SlopeVector};
pub use interval::{build_interval_solution, combined_tv, injections_at, linear_tv, IntervalSolution, LinearTimeInterval};
pub use norms::{NormKind, NormReport};
pub use powerflow::{solve_powerflow, InjectionTarget, Network, NewtonOptions, PowerFlowSolution, VoltageState};
pub use scenario::{generate_scenario, Scenario, ScenarioManifest, ScenarioOptions};
pub use trajectory::{
    branch_flows, partition, run_time_varying, solve_discrete_points, validate, ErrorReport, InjectionSchedule,
    Trajectory, TrajectoryOptions,
};
