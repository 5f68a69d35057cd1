//! Seeded synthetic 24-hour schedules with wind and solar injections.
//!
//! Each non-slack load follows `m(t) = 1 + v a s(t)` with `s` a sum of two
//! sinusoids plus noise; reactive load moves the other way, `Q0 (2 - m)`.
//! Renewables offset a fixed share of the mean demand and conventional
//! generators follow the net load. The intensity `v` is raised until the
//! total active-injection variation reaches the requested fraction of the
//! base demand.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::case::BusType;
use crate::error::{Error, Result};
use crate::powerflow::{InjectionTarget, Network};
use crate::trajectory::{partition, solve_discrete_points, Breakpoint, InjectionSchedule, TrajectoryOptions};

const LOAD_AMPLITUDE: f64 = 0.25;
const LOAD_NOISE: f64 = 0.1;
const WIND_AMPLITUDE: f64 = 0.5;
const WIND_NOISE: f64 = 0.2;
const MAX_INTENSITY: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOptions {
    /// Mean renewable output as a fraction of base demand.
    pub vre_share: f64,
    /// Fraction of renewable output from wind; the rest is solar.
    pub wind_fraction: f64,
    pub wind_sites: usize,
    pub solar_sites: usize,
    pub hours: f64,
    pub intervals: usize,
}

impl Default for ScenarioOptions {
    fn default() -> Self {
        Self { vre_share: 0.3, wind_fraction: 0.6, wind_sites: 20, solar_sites: 10, hours: 24.0, intervals: 24 }
    }
}

/// Everything needed to reproduce or audit a generated schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioManifest {
    pub case: String,
    pub seed: u64,
    pub variation_fraction: f64,
    pub achieved_variation: f64,
    pub intensity: f64,
    pub base_total_demand: f64,
    pub options: ScenarioOptions,
    /// Bus id per wind site, repeated ids when sites share a bus.
    pub wind_buses: Vec<usize>,
    pub solar_buses: Vec<usize>,
    pub mean_wind_output: f64,
    pub mean_solar_output: f64,
    /// Mean renewable output over mean total demand.
    pub achieved_vre_share: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub schedule: InjectionSchedule,
    pub manifest: ScenarioManifest,
}

/// Draws that do not depend on the intensity.
struct Draws {
    times: Vec<f64>,
    /// `load_shape[b][l]` for each non-slack position `b`.
    load_shape: Vec<Vec<f64>>,
    wind_shape: Vec<Vec<f64>>,
    wind_buses: Vec<usize>,
    solar_buses: Vec<usize>,
}

impl Draws {
    fn new(network: &Network, seed: u64, opts: &ScenarioOptions) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = opts.intervals.max(1);
        let times: Vec<f64> = (0..=m).map(|l| opts.hours * l as f64 / m as f64).collect();
        let load_shape = network
            .sets
            .non_slack
            .iter()
            .map(|_| {
                let (p1, p2) = (rng.gen_range(0.0..2.0 * PI), rng.gen_range(0.0..2.0 * PI));
                times
                    .iter()
                    .map(|&t| {
                        (2.0 * PI * t / 24.0 + p1).sin()
                            + 0.5 * (2.0 * PI * t / 8.0 + p2).sin()
                            + LOAD_NOISE * rng.gen_range(-1.0..1.0)
                    })
                    .collect()
            })
            .collect();

        let pq = &network.sets.pq;
        let sites = opts.wind_sites + opts.solar_sites;
        let chosen: Vec<usize> = if pq.is_empty() || sites == 0 {
            Vec::new()
        } else if pq.len() >= sites {
            sample(&mut rng, pq.len(), sites).into_iter().map(|k| pq[k]).collect()
        } else {
            (0..sites).map(|_| pq[rng.gen_range(0..pq.len())]).collect()
        };
        let (wind_buses, solar_buses) = if chosen.is_empty() {
            (Vec::new(), Vec::new())
        } else {
            let (w, s) = chosen.split_at(opts.wind_sites);
            (w.to_vec(), s.to_vec())
        };
        let wind_shape = wind_buses
            .iter()
            .map(|_| {
                let phase = rng.gen_range(0.0..2.0 * PI);
                times
                    .iter()
                    .map(|&t| WIND_AMPLITUDE * (2.0 * PI * t / 24.0 + phase).sin() + WIND_NOISE * rng.gen_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        Self { times, load_shape, wind_shape, wind_buses, solar_buses }
    }
}

fn solar_shape(t: f64) -> f64 {
    let hour = t.rem_euclid(24.0);
    if (6.0..=18.0).contains(&hour) {
        (PI * (hour - 6.0) / 12.0).sin()
    } else {
        0.0
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

struct Built {
    targets: Vec<InjectionTarget>,
    total_variation: f64,
    mean_wind: f64,
    mean_solar: f64,
    mean_demand: f64,
}

fn build(network: &Network, draws: &Draws, opts: &ScenarioOptions, intensity: f64, base_demand: f64) -> Built {
    let case = &network.case;
    let sets = &network.sets;
    let nt = draws.times.len();
    let blend = intensity.min(1.0);
    let renewable_total = opts.vre_share * base_demand;

    // renewable output per bus index and breakpoint
    let mut vre = vec![vec![0.0; nt]; sets.n_bus];
    let mut wind_total = vec![0.0; nt];
    let mut solar_total = vec![0.0; nt];
    if !draws.wind_buses.is_empty() {
        let site_mean = renewable_total * opts.wind_fraction / draws.wind_buses.len() as f64;
        for (&bus, shape) in draws.wind_buses.iter().zip(&draws.wind_shape) {
            let profile: Vec<f64> = shape.iter().map(|s| 1.0 + blend * s).collect();
            let scale = site_mean / mean(&profile);
            for l in 0..nt {
                vre[bus][l] += scale * profile[l];
                wind_total[l] += scale * profile[l];
            }
        }
    }
    if !draws.solar_buses.is_empty() {
        let site_mean = renewable_total * (1.0 - opts.wind_fraction) / draws.solar_buses.len() as f64;
        let raw: Vec<f64> = draws.times.iter().map(|&t| solar_shape(t)).collect();
        let raw_mean = mean(&raw);
        let profile: Vec<f64> = raw
            .iter()
            .map(|s| if raw_mean > 0.0 { 1.0 + blend * (s / raw_mean - 1.0) } else { 1.0 })
            .collect();
        for &bus in &draws.solar_buses {
            for l in 0..nt {
                vre[bus][l] += site_mean * profile[l];
                solar_total[l] += site_mean * profile[l];
            }
        }
    }

    let multiplier: Vec<Vec<f64>> = draws
        .load_shape
        .iter()
        .map(|s| s.iter().map(|x| 1.0 + intensity * LOAD_AMPLITUDE * x).collect())
        .collect();
    let slack_demand = case.buses[sets.slack].p_demand;
    let demand: Vec<f64> = (0..nt)
        .map(|l| {
            slack_demand
                + sets
                    .non_slack
                    .iter()
                    .enumerate()
                    .map(|(b, &i)| case.buses[i].p_demand * multiplier[b][l])
                    .sum::<f64>()
        })
        .collect();

    let targets: Vec<InjectionTarget> = (0..nt)
        .map(|l| {
            let gen_scale = if base_demand > 0.0 { (demand[l] - wind_total[l] - solar_total[l]) / base_demand } else { 1.0 };
            let p = sets
                .non_slack
                .iter()
                .enumerate()
                .map(|(b, &i)| {
                    let bus = &case.buses[i];
                    bus.p_generation * gen_scale + vre[i][l] - bus.p_demand * multiplier[b][l]
                })
                .collect();
            let q = sets
                .pq
                .iter()
                .map(|&i| {
                    let b = sets.column[i].unwrap_or(0);
                    let bus = &case.buses[i];
                    bus.q_generation - bus.q_demand * (2.0 - multiplier[b][l])
                })
                .collect();
            let pv_vsq = sets.pv.iter().map(|&i| case.buses[i].v_setpoint.powi(2)).collect();
            InjectionTarget { p, q, pv_vsq }
        })
        .collect();

    let total_variation = if base_demand > 0.0 {
        targets
            .windows(2)
            .map(|w| w[0].p.iter().zip(&w[1].p).map(|(a, b)| (b - a).abs()).sum::<f64>())
            .sum::<f64>()
            / base_demand
    } else {
        0.0
    };
    Built {
        targets,
        total_variation,
        mean_wind: mean(&wind_total),
        mean_solar: mean(&solar_total),
        mean_demand: mean(&demand),
    }
}

/// Total variation `Σ_l Σ_i |P_i(t_{l+1}) - P_i(t_l)|` over non-slack buses,
/// relative to `base_demand`.
pub fn total_variation(schedule: &InjectionSchedule, base_demand: f64) -> f64 {
    schedule
        .breakpoints
        .windows(2)
        .map(|w| w[0].target.p.iter().zip(&w[1].target.p).map(|(a, b)| (b - a).abs()).sum::<f64>())
        .sum::<f64>()
        / base_demand
}

pub fn generate_scenario(
    network: &Network,
    seed: u64,
    variation_fraction: f64,
    opts: &ScenarioOptions,
) -> Result<Scenario> {
    if !(variation_fraction >= 0.0) || !variation_fraction.is_finite() {
        return Err(Error::OutOfRange(format!("variation fraction must be non-negative, got {variation_fraction}")));
    }
    if !(opts.hours > 0.0) || opts.intervals == 0 {
        return Err(Error::OutOfRange("scenario horizon must be positive".into()));
    }
    if !(0.0..=1.0).contains(&opts.vre_share) || !(0.0..=1.0).contains(&opts.wind_fraction) {
        return Err(Error::OutOfRange("renewable fractions must lie in [0, 1]".into()));
    }
    let case = &network.case;
    let base_demand: f64 = case.buses.iter().map(|b| b.p_demand).sum();
    let draws = Draws::new(network, seed, opts);

    let intensity = if variation_fraction == 0.0 {
        0.0
    } else {
        let reaches = |v: f64| build(network, &draws, opts, v, base_demand).total_variation >= variation_fraction;
        let mut hi = 0.05;
        while !reaches(hi) {
            hi *= 2.0;
            if hi > MAX_INTENSITY {
                return Err(Error::InfeasibleScenario(format!(
                    "variation {variation_fraction} is not reachable on case {}",
                    case.name
                )));
            }
        }
        let mut lo = 0.0;
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if reaches(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    let built = build(network, &draws, opts, intensity, base_demand);
    let schedule = InjectionSchedule::new(
        draws
            .times
            .iter()
            .zip(built.targets)
            .map(|(&time, target)| Breakpoint { time, target })
            .collect(),
    )?;

    let intervals = partition(&schedule)?;
    solve_discrete_points(network, &intervals, &TrajectoryOptions::default()).map_err(|e| {
        if e.is_numerical() {
            Error::InfeasibleScenario(format!("no power flow solution along the schedule: {e}"))
        } else {
            e
        }
    })?;

    let ids = |v: &[usize]| v.iter().map(|&i| case.buses[i].id).collect::<Vec<_>>();
    debug_assert!(draws.wind_buses.iter().all(|&i| case.buses[i].bus_type == BusType::PQ));
    let manifest = ScenarioManifest {
        case: case.name.clone(),
        seed,
        variation_fraction,
        achieved_variation: built.total_variation,
        intensity,
        base_total_demand: base_demand,
        options: *opts,
        wind_buses: ids(&draws.wind_buses),
        solar_buses: ids(&draws.solar_buses),
        mean_wind_output: built.mean_wind,
        mean_solar_output: built.mean_solar,
        achieved_vre_share: if built.mean_demand > 0.0 { (built.mean_wind + built.mean_solar) / built.mean_demand } else { 0.0 },
    };
    Ok(Scenario { schedule, manifest })
}
