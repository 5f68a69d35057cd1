//! `tvflow` command-line front end.
//!
//! Exit codes: 0 on success, 1 for input errors, 2 for numerical failures.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tvflow::derivatives::derivative_series;
use tvflow::io::{error_summary_json, read_schedule, write_branch_flows, write_error_report, write_schedule, Method, TrajectoryWriter};
use tvflow::norms::{NormKind, NormReport};
use tvflow::trajectory::{branch_flows, partition, reference_solutions, ErrorReport, InitialGuess, TrajectoryOptions};
use tvflow::{generate_scenario, run_time_varying, Case, Error, InjectionSchedule, Network, NewtonOptions, ScenarioOptions};

#[derive(Parser, Debug)]
#[command(name = "tvflow", version, about = "Time-varying AC power flow over piecewise-linear schedules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve a single power flow and write the solution as JSON.
    Solve(SolveArgs),
    /// Evaluate a schedule with the combined time-varying function.
    Trajectory(TrajectoryArgs),
    /// Derivative norms, bounds and critical order at the start of an interval.
    Norms(NormsArgs),
    /// Generate a synthetic 24-hour schedule with wind and solar injections.
    Scenario(ScenarioArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Case file in MATPOWER format.
    #[arg(long)]
    case: PathBuf,
    /// Newton convergence tolerance on the mismatch infinity-norm.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Write the main result to standard output instead of a file.
    #[arg(long)]
    stdout: bool,
    /// Start Newton from real parts 0 and imaginary parts 1 on non-slack buses.
    #[arg(long)]
    flat_start_literal: bool,
}

#[derive(Args, Debug)]
struct Source {
    /// Schedule CSV (`time_hours,bus,p_pu,q_pu`).
    #[arg(long, conflicts_with_all = ["seed", "variation"])]
    schedule: Option<PathBuf>,
    /// Generate the schedule from this seed instead.
    #[arg(long, requires = "variation")]
    seed: Option<u64>,
    /// Total variation of the generated schedule, as a fraction of demand.
    #[arg(long, requires = "seed")]
    variation: Option<f64>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct TrajectoryArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    source: Source,
    /// Samples per interval, endpoints included.
    #[arg(long, default_value_t = 11)]
    samples: usize,
    /// Compare against Newton solves at every sample.
    #[arg(long)]
    validate: bool,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct NormsArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    source: Source,
    /// Interval index, from 0.
    #[arg(long, default_value_t = 0)]
    interval: usize,
    /// Highest derivative order.
    #[arg(long, default_value_t = 8)]
    max_order: usize,
    #[arg(long, default_value = "2")]
    norm: NormKind,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    variation: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Failure split by exit code.
enum Failure {
    Input(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Trajectory(args) => cmd_trajectory(args),
        Command::Norms(args) => cmd_norms(args),
        Command::Scenario(args) => cmd_scenario(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load_network(path: &Path) -> Outcome<Network> {
    if !path.exists() {
        return Err(Failure::Input(format!("file not found: {}", path.display())));
    }
    let case = Case::from_file(path)?;
    let report = case.validate()?;
    if !report.is_connected() {
        eprintln!("warning: {} island(s) not connected to the slack bus", report.islands.len());
    }
    Ok(Network::new(case)?)
}

fn newton_options(common: &Common) -> Outcome<NewtonOptions> {
    let mut options = NewtonOptions::default();
    if let Some(tol) = common.tol {
        if !(tol > 0.0) {
            return Err(Failure::Input(format!("--tol must be positive, got {tol}")));
        }
        options.tolerance = tol;
    }
    Ok(options)
}

fn create(dir: &Path, name: &str) -> Outcome<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn emit(common: &Common, name: &str, bytes: &[u8]) -> Outcome<()> {
    if common.stdout {
        std::io::stdout().lock().write_all(bytes)?;
    } else {
        let mut w = create(&common.out, name)?;
        w.write_all(bytes)?;
        w.flush()?;
    }
    Ok(())
}

fn load_schedule(network: &Network, source: &Source) -> Outcome<InjectionSchedule> {
    match (&source.schedule, source.seed, source.variation) {
        (Some(path), _, _) => {
            if !path.exists() {
                return Err(Failure::Input(format!("file not found: {}", path.display())));
            }
            Ok(read_schedule(File::open(path)?, network)?)
        }
        (None, Some(seed), Some(variation)) => {
            let scenario = generate_scenario(network, seed, variation, &ScenarioOptions::default())?;
            Ok(scenario.schedule)
        }
        _ => Err(Failure::Input("either --schedule or --seed with --variation is required".into())),
    }
}

fn cmd_solve(args: SolveArgs) -> Outcome<()> {
    let common = &args.common;
    let network = load_network(&common.case)?;
    let options = newton_options(common)?;
    let initial = if common.flat_start_literal {
        tvflow::VoltageState::flat_start_literal(&network.case)
    } else {
        network.flat_start()
    };
    let solution = network.solve(&network.base_target(), &initial, &options)?;
    let mut json = serde_json::to_string_pretty(&solution.to_record(&network.case))?;
    json.push('\n');
    emit(common, "solution.json", json.as_bytes())
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    case: String,
    complete: bool,
    intervals: usize,
    samples_per_interval: usize,
    files: Vec<String>,
    error: Option<String>,
}

#[derive(Serialize)]
struct SampleRecord {
    time_hours: f64,
    bus: usize,
    v_real: f64,
    v_imag: f64,
    v_mag: f64,
    method: Method,
}

fn sample_records(case: &Case, samples: &[Vec<tvflow::VoltageState>], method: Method, out: &mut Vec<SampleRecord>) {
    for (l, row) in samples.iter().enumerate() {
        for (j, state) in row.iter().enumerate() {
            if l > 0 && j == 0 {
                continue;
            }
            for (i, bus) in case.buses.iter().enumerate() {
                out.push(SampleRecord {
                    time_hours: state.time,
                    bus: bus.id,
                    v_real: state.v_real[i],
                    v_imag: state.v_imag[i],
                    v_mag: state.magnitude(i),
                    method,
                });
            }
        }
    }
}

fn cmd_trajectory(args: TrajectoryArgs) -> Outcome<()> {
    let common = &args.common;
    if args.samples < 2 {
        return Err(Failure::Input(format!("--samples must be at least 2, got {}", args.samples)));
    }
    let network = load_network(&common.case)?;
    let schedule = load_schedule(&network, &args.source)?;
    let options = TrajectoryOptions {
        newton: newton_options(common)?,
        initial: if common.flat_start_literal { InitialGuess::FlatLiteral } else { InitialGuess::Flat },
        warm_start: true,
        points_per_interval: args.samples,
    };
    let mut manifest = RunManifest {
        command: "trajectory",
        case: network.case.name.clone(),
        complete: false,
        intervals: schedule.interval_count(),
        samples_per_interval: args.samples,
        files: Vec::new(),
        error: None,
    };
    let result = write_trajectory(&network, &schedule, &options, &args, &mut manifest);
    if let Err(Failure::Numerical(msg) | Failure::Input(msg)) = &result {
        manifest.error = Some(msg.clone());
    }
    manifest.complete = result.is_ok();
    if !common.stdout || result.is_err() {
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        let mut w = create(&common.out, "manifest.json")?;
        w.write_all(json.as_bytes())?;
        w.flush()?;
    }
    result
}

fn write_trajectory(
    network: &Network,
    schedule: &InjectionSchedule,
    options: &TrajectoryOptions,
    args: &TrajectoryArgs,
    manifest: &mut RunManifest,
) -> Outcome<()> {
    let common = &args.common;
    let case = &network.case;
    let trajectory = run_time_varying(network, schedule, options)?;
    let linear = trajectory.linear_samples();
    let (reference, report) = if args.validate {
        let reference = reference_solutions(network, &trajectory, &options.newton);
        let report = ErrorReport::compare(case, &trajectory.samples, &reference)?;
        if report.failed_samples > 0 {
            eprintln!("warning: {} reference solve(s) failed and were excluded", report.failed_samples);
        }
        let newton: Vec<Vec<tvflow::VoltageState>> = reference
            .states
            .iter()
            .map(|row| row.iter().flatten().cloned().collect())
            .collect();
        (Some(newton), Some(report))
    } else {
        (None, None)
    };

    let data = match args.format {
        Format::Csv => {
            let mut w = TrajectoryWriter::new(Vec::new())?;
            w.write_samples(case, &linear, Method::Linear)?;
            w.write_samples(case, &trajectory.samples, Method::Combined)?;
            if let Some(newton) = &reference {
                w.write_samples(case, newton, Method::Newton)?;
            }
            w.finish()?
        }
        Format::Json => {
            let mut records = Vec::new();
            sample_records(case, &linear, Method::Linear, &mut records);
            sample_records(case, &trajectory.samples, Method::Combined, &mut records);
            if let Some(newton) = &reference {
                sample_records(case, newton, Method::Newton, &mut records);
            }
            let mut json = serde_json::to_vec_pretty(&records)?;
            json.push(b'\n');
            json
        }
    };
    let name = match args.format {
        Format::Csv => "trajectory.csv",
        Format::Json => "trajectory.json",
    };
    emit(common, name, &data)?;
    if !common.stdout {
        manifest.files.push(name.into());
    }

    let mut flows = Vec::new();
    for state in trajectory.breakpoint_states() {
        flows.extend(branch_flows(case, state)?);
    }
    let mut w = create(&common.out, "branch_flows.csv")?;
    write_branch_flows(&flows, &mut w)?;
    w.flush()?;
    manifest.files.push("branch_flows.csv".into());

    if let Some(report) = &report {
        let mut w = create(&common.out, "errors.csv")?;
        write_error_report(report, &mut w)?;
        w.flush()?;
        let mut json = error_summary_json(report)?;
        json.push('\n');
        let mut w = create(&common.out, "errors.json")?;
        w.write_all(json.as_bytes())?;
        w.flush()?;
        manifest.files.extend(["errors.csv".into(), "errors.json".into()]);
        eprintln!("global max error: {:e}", report.global_max);
    }
    Ok(())
}

fn cmd_norms(args: NormsArgs) -> Outcome<()> {
    let common = &args.common;
    if args.max_order < 2 {
        return Err(Failure::Input(format!("--max-order must be at least 2, got {}", args.max_order)));
    }
    let network = load_network(&common.case)?;
    let schedule = load_schedule(&network, &args.source)?;
    let intervals = partition(&schedule)?;
    let Some(interval) = intervals.get(args.interval) else {
        return Err(Failure::Input(format!(
            "interval {} out of range, the schedule has {}",
            args.interval,
            intervals.len()
        )));
    };
    let options = TrajectoryOptions {
        newton: newton_options(common)?,
        initial: if common.flat_start_literal { InitialGuess::FlatLiteral } else { InitialGuess::Flat },
        ..Default::default()
    };
    let points = tvflow::solve_discrete_points(&network, &intervals[..=args.interval], &options)?;
    let state = &points.solutions[args.interval].state;
    let series = derivative_series(state, &interval.slope, &network.ybus, &network.sets, args.max_order)?;
    let report = NormReport::build(state, &series, &network.ybus, &network.sets, args.norm)?;
    let (name, data) = match args.format {
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            ("norms.csv", buf)
        }
        Format::Json => {
            let mut json = serde_json::to_vec_pretty(&report)?;
            json.push(b'\n');
            ("norms.json", json)
        }
    };
    emit(common, name, &data)?;
    match report.critical_order {
        Some(d) => eprintln!("critical order: {d}"),
        None => eprintln!("critical order: none (first ratio already above one)"),
    }
    Ok(())
}

fn cmd_scenario(args: ScenarioArgs) -> Outcome<()> {
    let common = &args.common;
    let network = load_network(&common.case)?;
    let scenario = generate_scenario(&network, args.seed, args.variation, &ScenarioOptions::default())?;
    let mut buf = Vec::new();
    write_schedule(&scenario.schedule, &network, &mut buf)?;
    emit(common, "schedule.csv", &buf)?;
    let mut json = serde_json::to_string_pretty(&scenario.manifest)?;
    json.push('\n');
    let mut w = create(&common.out, "scenario.json")?;
    w.write_all(json.as_bytes())?;
    w.flush()?;
    Ok(())
}
