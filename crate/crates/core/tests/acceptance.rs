//! Acceptance suite: one PASS/FAIL line per criterion. Exits non-zero if
//! any criterion fails.

mod common;

use std::fs::File;
use std::time::{Duration, Instant};

use common::*;
use num_complex::Complex64;
use tvflow::combinatorics::{dblfact_sum, double_factorial, phi_sum};
use tvflow::io::read_schedule;
use tvflow::norms::{is_u_shaped, NormKind, NormReport};
use tvflow::trajectory::reference_solutions;
use tvflow::{
    derivative_series, partition, run_time_varying, Case, Error, ErrorReport, InjectionSchedule, Network,
    NewtonOptions, Trajectory, TrajectoryOptions,
};

type Outcome = Result<String, String>;

fn check(cond: bool, what: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what)
    }
}

fn schedule(net: &Network, file: &str) -> InjectionSchedule {
    read_schedule(File::open(data_path(&format!("schedules/{file}"))).unwrap(), net).unwrap()
}

struct Scenario {
    net: Network,
    schedule: InjectionSchedule,
    trajectory: Trajectory,
    combined: ErrorReport,
    linear: ErrorReport,
}

impl Scenario {
    fn load(case: &str, file: &str) -> Scenario {
        let net = load_network(case);
        let schedule = schedule(&net, file);
        let trajectory = run_time_varying(&net, &schedule, &TrajectoryOptions::default()).unwrap();
        let reference = reference_solutions(&net, &trajectory, &NewtonOptions::default());
        let combined = ErrorReport::compare(&net.case, &trajectory.samples, &reference).unwrap();
        let linear = ErrorReport::compare(&net.case, &trajectory.linear_samples(), &reference).unwrap();
        Scenario { net, schedule, trajectory, combined, linear }
    }
}

fn double_factorial_sum_identity() -> Outcome {
    let start = Instant::now();
    let mut ok = true;
    for i in 2..=15u32 {
        ok &= dblfact_sum(i as u64).map_err(|e| e.to_string())? == double_factorial(2 * i as i64 - 1).map_err(|e| e.to_string())?;
    }
    for d in 2..=16u32 {
        ok &= phi_sum(d as u64).map_err(|e| e.to_string())? == double_factorial(2 * d as i64 - 3).map_err(|e| e.to_string())?;
    }
    let elapsed = start.elapsed();
    check(ok, "identity violated".into())?;
    check(elapsed < Duration::from_millis(1), format!("took {elapsed:?}"))?;
    Ok(format!("i = 2..15 and d = 2..16 exact in {elapsed:?}"))
}

fn solver_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst_diff: f64 = 0.0;
    let mut worst_mismatch: f64 = 0.0;
    for name in ["case5.m", "case118.m"] {
        let net = load_network(name);
        let sol = net.solve(&net.base_target(), &net.flat_start(), &NewtonOptions::default()).map_err(|e| e.to_string())?;
        let (p, q) = case_injections(&net.case);
        let gs = gauss_seidel(&net.case, &p, &q, 1e-12, 500_000);
        check(gs.last_step <= 1e-12, format!("{name}: oracle stalled at step {:e}", gs.last_step))?;
        for i in 0..net.bus_count() {
            worst_diff = worst_diff
                .max((sol.state.v_real[i] - gs.voltages[i].re).abs())
                .max((sol.state.v_imag[i] - gs.voltages[i].im).abs());
        }
        let v: Vec<Complex64> = (0..net.bus_count()).map(|i| sol.state.phasor(i)).collect();
        worst_mismatch = worst_mismatch.max(mismatch_inf(&net.case, &v));
    }
    let elapsed = start.elapsed();
    check(worst_diff <= 1e-8, format!("voltage difference {worst_diff:e}"))?;
    check(worst_mismatch <= 1e-10, format!("mismatch {worst_mismatch:e}"))?;
    check(elapsed < Duration::from_secs(5), format!("took {elapsed:?}"))?;
    Ok(format!("max |dV| {worst_diff:.1e}, mismatch {worst_mismatch:.1e}, {elapsed:.2?}"))
}

fn derivative_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst1: f64 = 0.0;
    let mut worst2: f64 = 0.0;
    for (case, file) in [("case5.m", "case5_ramp.csv"), ("case118.m", "case118_day.csv")] {
        let net = load_network(case);
        let sched = schedule(&net, file);
        let intervals = partition(&sched).map_err(|e| e.to_string())?;
        for iv in intervals.iter().take(3) {
            let x0 = net.solve(&iv.y_start, &net.flat_start(), &tight_newton()).map_err(|e| e.to_string())?.state;
            let series = derivative_series(&x0, &iv.slope, &net.ybus, &net.sets, 2).map_err(|e| e.to_string())?;
            let (fd1, fd2) = finite_difference_derivatives(&net, &iv.y_start, &iv.slope, &x0, 1e-2);
            worst1 = worst1.max(relative_error(&series.derivatives[0], &fd1));
            worst2 = worst2.max(relative_error(&series.derivatives[1], &fd2));
        }
    }
    let elapsed = start.elapsed();
    check(worst1 <= 1e-5, format!("first derivative relative error {worst1:e}"))?;
    check(worst2 <= 1e-3, format!("second derivative relative error {worst2:e}"))?;
    check(elapsed < Duration::from_secs(10), format!("took {elapsed:?}"))?;
    Ok(format!("relative errors {worst1:.1e} (first), {worst2:.1e} (second), {elapsed:.2?}"))
}

fn norm_reports(s: &Scenario, order: usize) -> Result<Vec<NormReport>, String> {
    s.trajectory
        .interval_solutions
        .iter()
        .map(|sol| {
            let series = derivative_series(&sol.x_start, &sol.interval.slope, &s.net.ybus, &s.net.sets, order)
                .map_err(|e| e.to_string())?;
            NormReport::build(&sol.x_start, &series, &s.net.ybus, &s.net.sets, NormKind::Two).map_err(|e| e.to_string())
        })
        .collect()
}

fn derivative_bound(small: &Scenario, large: &Scenario) -> Outcome {
    let mut checked = 0;
    let mut tightest: f64 = 0.0;
    for s in [small, large] {
        for report in norm_reports(s, 6)? {
            for d in 2..=6 {
                let measured = report.derivative_norms[d - 1];
                let bound = report.bounds[d - 2];
                check(measured <= bound * (1.0 + 1e-6), format!("order {d} at t = {}: {measured:e} > {bound:e}", report.time))?;
                if bound > 0.0 {
                    tightest = tightest.max(measured / bound);
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} order/time pairs, largest measured/bound {tightest:.1e}"))
}

fn u_curve(small: &Scenario) -> Outcome {
    let report = norm_reports(small, 8)?.remove(0);
    let norms = &report.derivative_norms;
    let listed: Vec<String> = norms.iter().map(|v| format!("{v:.2e}")).collect();
    check(is_u_shaped(norms), format!("norms not U-shaped: {}", listed.join(" ")))?;
    Ok(format!("minimum at order {} of 8", report.measured_minimum_order()))
}

fn linear_accuracy(small: &Scenario) -> Outcome {
    let e = small.linear.global_max;
    check(e < 5e-2 && e > 1e-4, format!("linear error {e:e}"))?;
    check(small.linear.failed_samples == 0, "reference solves failed".into())?;
    Ok(format!("max error {e:.2e} over 11 samples"))
}

fn combined_accuracy(small: &Scenario, large: &Scenario, elapsed: Duration) -> Outcome {
    let (c5, l5) = (small.combined.global_max, small.linear.global_max);
    let (c118, l118) = (large.combined.global_max, large.linear.global_max);
    check(c5 < 1e-4, format!("5-bus combined error {c5:e}"))?;
    check(c118 < 1e-3, format!("118-bus combined error {c118:e}"))?;
    check(c5 <= l5 / 10.0, format!("5-bus combined {c5:e} vs linear {l5:e}"))?;
    check(c118 <= l118 / 10.0, format!("118-bus combined {c118:e} vs linear {l118:e}"))?;
    check(large.combined.unique_comparisons == 118 * 241, format!("{} comparisons", large.combined.unique_comparisons))?;
    check(large.combined.intervals.iter().all(|e| e.comparisons == 118 * 11), "per-interval count".into())?;
    check(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;
    Ok(format!(
        "5-bus {c5:.1e} (linear {l5:.1e}), 118-bus {c118:.1e} (linear {l118:.1e}), {} comparisons, {elapsed:.2?}",
        large.combined.unique_comparisons
    ))
}

fn refinement(small: &Scenario, large: &Scenario) -> Outcome {
    let mut parts = Vec::new();
    for s in [small, large] {
        let fine = s.schedule.refined().map_err(|e| e.to_string())?;
        let traj = run_time_varying(&s.net, &fine, &TrajectoryOptions::default()).map_err(|e| e.to_string())?;
        let report = tvflow::validate(&s.net, &traj, &NewtonOptions::default()).map_err(|e| e.to_string())?;
        let ratio = s.combined.global_max / report.global_max;
        check(ratio >= 4.0, format!("{}: reduction {ratio:.2}", s.net.case.name))?;
        parts.push(format!("{} {ratio:.1}x", s.net.case.name));
    }
    Ok(format!("error reduction when halving: {}", parts.join(", ")))
}

fn no_accumulation(large: &Scenario) -> Outcome {
    let median = large.combined.median_interval_max();
    let last = large.combined.intervals.last().map(|e| e.max_err()).unwrap_or(0.0);
    let worst = large.combined.intervals.iter().map(|e| e.max_err()).fold(0.0, f64::max);
    let increasing = large.combined.intervals.windows(2).all(|w| w[1].max_err() >= w[0].max_err());
    check(!increasing, "per-interval maxima grow monotonically".into())?;
    check(last <= 10.0 * median, format!("last {last:e} vs median {median:e}"))?;
    Ok(format!("last {last:.1e}, median {median:.1e}, worst {worst:.1e}"))
}

fn best_of<T>(runs: usize, mut f: impl FnMut() -> T) -> Duration {
    (0..runs)
        .map(|_| {
            let start = Instant::now();
            std::hint::black_box(f());
            start.elapsed()
        })
        .min()
        .unwrap_or_default()
}

fn performance(large: &Scenario) -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let (fast, slow) = pool.install(|| {
        let fast = best_of(3, || run_time_varying(&large.net, &large.schedule, &TrajectoryOptions::default()).unwrap());
        let slow = best_of(3, || reference_solutions(&large.net, &large.trajectory, &NewtonOptions::default()));
        (fast, slow)
    });
    let ratio = slow.as_secs_f64() / fast.as_secs_f64();
    check(ratio >= 3.0, format!("speedup {ratio:.2} ({fast:?} vs {slow:?})"))?;
    Ok(format!("trajectory {fast:.2?} vs per-sample Newton {slow:.2?}, {ratio:.1}x"))
}

fn parser_corpus() -> Outcome {
    let mut parsed = 0;
    for name in ["case5.m", "case118.m", "single_bus.m", "islanded.m"] {
        let case = load_case(name);
        let back = Case::from_json(&case.to_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        check(back == case, format!("{name}: round trip differs"))?;
        parsed += 1;
    }
    let expectations: [(&str, fn(&Error) -> bool); 6] = [
        ("bad_number.m", |e| matches!(e, Error::MalformedCase { .. })),
        ("no_slack.m", |e| matches!(e, Error::MissingSlack)),
        ("duplicate_bus.m", |e| matches!(e, Error::DuplicateBusId(2))),
        ("zero_base.m", |e| matches!(e, Error::NonPositiveBase(_))),
        ("unterminated.m", |e| matches!(e, Error::MalformedCase { .. })),
        ("short_row.m", |e| matches!(e, Error::MalformedCase { .. })),
    ];
    for (file, expected) in expectations {
        match Case::from_file(data_path(&format!("malformed/{file}"))) {
            Err(e) if expected(&e) => {}
            Err(e) => return Err(format!("{file}: unexpected error {e}")),
            Ok(_) => return Err(format!("{file}: parsed without error")),
        }
    }
    Ok(format!("{parsed} cases round-trip, {} malformed fixtures rejected", expectations.len()))
}

fn main() {
    let start = Instant::now();
    let small = Scenario::load("case5.m", "case5_ramp.csv");
    let large = Scenario::load("case118.m", "case118_day.csv");
    let validation_time = start.elapsed();

    let results: Vec<(&str, Outcome)> = vec![
        ("double factorial sum identity", double_factorial_sum_identity()),
        ("solver oracle equivalence", solver_oracle()),
        ("derivative correctness", derivative_correctness()),
        ("derivative norm bound", derivative_bound(&small, &large)),
        ("U-curve", u_curve(&small)),
        ("linear function accuracy", linear_accuracy(&small)),
        ("combined function accuracy", combined_accuracy(&small, &large, validation_time)),
        ("convergence under refinement", refinement(&small, &large)),
        ("no error accumulation", no_accumulation(&large)),
        ("performance", performance(&large)),
        ("parser corpus", parser_corpus()),
    ];
    let mut failed = 0;
    for (k, (name, outcome)) in results.iter().enumerate() {
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", k + 1),
            Err(reason) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {reason}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
