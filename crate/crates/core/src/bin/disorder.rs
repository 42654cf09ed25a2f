//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when an asserted inequality fails or a
//! computation cannot complete, 2 on usage errors and unreadable inputs.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use disorder_core::dp::{extract_boundary, solve_dp, write_boundary_csv, DpParams, DpSettings};
use disorder_core::experiments::{run_experiment, ExperimentConfig, ExperimentError};
use disorder_core::filter::{filter_exact, filter_sde};
use disorder_core::model::{ModelError, ModelSpec};
use disorder_core::risk::{estimate_risk, optimize_threshold, StrategySpec};
use disorder_core::shiryaev::{solve, ClassicalParams};
use disorder_core::sim::{simulate_scenario, TimeGrid};

#[derive(Parser)]
#[command(name = "disorder", version, about = "Quickest detection of a drift change with random magnitude")]
struct Cli {
    /// Master seed of all random streams.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Defaults to eight mean disorder times.
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one observation path.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0)]
        path_index: u64,
    },
    /// Run a posterior filter along a simulated path.
    Filter {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 0)]
        path_index: u64,
        #[arg(long, value_enum, default_value_t = Method::Exact)]
        method: Method,
    },
    /// Solve the one-atom problem: threshold and value table.
    Solve {
        #[arg(long, allow_hyphen_values = true)]
        b: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        lambda: f64,
        #[arg(long)]
        c: f64,
    },
    /// Monte Carlo Bayes risk of a stopping rule.
    Risk {
        #[arg(long)]
        model: PathBuf,
        /// `true:A`, `mismatched:L,LAMBDA_L,A` or `fixed:T`.
        #[arg(long)]
        strategy: Option<String>,
        /// Scan and refine threshold rules on the posterior over `LO,HI`.
        #[arg(long, value_parser = parse_bracket)]
        scan: Option<(f64, f64)>,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Value iteration on the posterior simplex.
    Dp {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        h: Option<f64>,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        /// Boundary nodes CSV.
        #[arg(long)]
        boundary_out: Option<PathBuf>,
    },
    /// Run a named experiment suite from a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Exact,
    Sde,
}

fn parse_bracket(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    fn run(message: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::run(format!("write failed: {e}"))
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::usage(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Io { .. }
            | ExperimentError::Parse { .. }
            | ExperimentError::Config(_)
            | ExperimentError::Model(_)
            | ExperimentError::UnknownExperiment(_) => Failure::usage(e.to_string()),
            other => Failure::run(other.to_string()),
        }
    }
}

fn run_err(e: impl std::fmt::Display) -> Failure {
    Failure::run(e.to_string())
}

fn usage_err(e: impl std::fmt::Display) -> Failure {
    Failure::usage(e.to_string())
}

fn create(path: &Path) -> Result<Box<dyn Write>, Failure> {
    let f = File::create(path).map_err(|e| Failure::usage(format!("cannot create {}: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn output(out: &Option<PathBuf>) -> Result<Box<dyn Write>, Failure> {
    match out {
        Some(p) => create(p),
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

/// `dir/stem.suffix` next to `path`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn write_json<T: Serialize>(mut w: impl Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut w, value).map_err(run_err)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn grid(model: &ModelSpec, args: &GridArgs) -> Result<TimeGrid, Failure> {
    let horizon = match args.horizon {
        Some(h) => h,
        None => (model.default_horizon() / args.dt - 1e-9).ceil() * args.dt,
    };
    TimeGrid::new(args.dt, horizon).map_err(usage_err)
}

fn load(path: &Path) -> Result<ModelSpec, Failure> {
    Ok(ModelSpec::from_json_file(path)?)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let seed = cli.seed;
    match &cli.command {
        Command::Simulate { model, grid: g, path_index } => {
            let m = load(model)?;
            let path = simulate_scenario(&m, &grid(&m, g)?, seed, *path_index);
            let mut w = output(&cli.out)?;
            path.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Filter {
            model,
            grid: g,
            path_index,
            method,
        } => {
            let m = load(model)?;
            let path = simulate_scenario(&m, &grid(&m, g)?, seed, *path_index);
            let post = match method {
                Method::Exact => filter_exact(&m, &path),
                Method::Sde => filter_sde(&m, &path),
            }
            .map_err(run_err)?;
            let mut w = output(&cli.out)?;
            post.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Solve { b, sigma, lambda, c } => {
            let params = ClassicalParams::new(*b, *sigma, *lambda, *c).map_err(usage_err)?;
            let sol = solve(&params).map_err(run_err)?;
            eprintln!("threshold a = {}", sol.threshold);
            match cli.format {
                Format::Json => {
                    #[derive(Serialize)]
                    struct Out<'a> {
                        header: serde_json::Value,
                        pi: &'a [f64],
                        value: &'a [f64],
                        derivative: &'a [f64],
                    }
                    let out = Out {
                        header: sol.header_json(),
                        pi: &sol.pi,
                        value: &sol.value,
                        derivative: &sol.derivative,
                    };
                    write_json(output(&cli.out)?, &out)?;
                }
                Format::Csv => {
                    let mut w = output(&cli.out)?;
                    sol.write_csv(&mut w)?;
                    w.flush()?;
                    if let Some(p) = &cli.out {
                        write_json(create(&sibling(p, "header.json"))?, &sol.header_json())?;
                    }
                }
            }
        }
        Command::Risk {
            model,
            strategy,
            scan,
            paths,
            grid: g,
        } => {
            let m = load(model)?;
            let tg = grid(&m, g)?;
            match (strategy, scan) {
                (Some(s), None) => {
                    let spec: StrategySpec = s.parse().map_err(usage_err)?;
                    let est = estimate_risk(&m, &spec, &tg, *paths, seed).map_err(run_err)?;
                    let mut w = output(&cli.out)?;
                    match cli.format {
                        Format::Json => write_json(w, &est)?,
                        Format::Csv => {
                            writeln!(w, "strategy,mean,std_error,half_width,n_paths,false_alarm,delay,truncated")?;
                            writeln!(
                                w,
                                "{spec},{},{},{},{},{},{},{}",
                                est.mean,
                                est.std_error,
                                est.half_width,
                                est.n_paths,
                                est.false_alarm_rate,
                                est.mean_delay,
                                est.truncated
                            )?;
                            w.flush()?;
                        }
                    }
                }
                (None, Some(bracket)) => {
                    let opt = optimize_threshold(&m, &tg, *paths, seed, *bracket).map_err(run_err)?;
                    eprintln!("best threshold a* = {} (risk {})", opt.a_star, opt.estimate.mean);
                    let mut w = output(&cli.out)?;
                    match cli.format {
                        Format::Json => write_json(w, &opt)?,
                        Format::Csv => {
                            opt.write_scan_csv(&mut w)?;
                            w.flush()?;
                        }
                    }
                }
                _ => return Err(Failure::usage("risk needs exactly one of --strategy and --scan")),
            }
        }
        Command::Dp {
            model,
            h,
            dt,
            boundary_out,
        } => {
            let m = load(model)?;
            let params = DpParams::from_model(&m).map_err(usage_err)?;
            let mut settings = DpSettings::default_for(params.n());
            settings.dt = *dt;
            if let Some(h) = h {
                settings.h = *h;
            }
            let sol = solve_dp(&params, &settings).map_err(run_err)?;
            eprintln!("converged after {} sweeps", sol.iterations);
            let mut w = output(&cli.out)?;
            match cli.format {
                Format::Json => write_json(w, &sol)?,
                Format::Csv => {
                    sol.write_csv(&mut w)?;
                    w.flush()?;
                }
            }
            let target = boundary_out
                .clone()
                .or_else(|| cli.out.as_ref().map(|p| sibling(p, "boundary.csv")));
            if let Some(p) = target {
                let nodes = extract_boundary(&sol).map_err(run_err)?;
                let mut bw = create(&p)?;
                write_boundary_csv(&nodes, &mut bw)?;
                bw.flush()?;
            }
        }
        Command::Experiment { config } => {
            let cfg = ExperimentConfig::from_file(config)?;
            let report = run_experiment(&cfg)?;
            let mut w = output(&cli.out)?;
            match cli.format {
                Format::Json => writeln!(w, "{}", report.to_json())?,
                Format::Csv => report.write_csv(&mut w)?,
            }
            w.flush()?;
            if let Some(p) = &cli.out {
                for t in &report.tables {
                    let mut tw = create(&sibling(p, &format!("{}.csv", t.name)))?;
                    t.write_csv(&mut tw)?;
                    tw.flush()?;
                }
            }
            for row in report.checks() {
                eprintln!("{}", row.describe());
            }
            let failures = report.failures();
            if !failures.is_empty() {
                let mut msg = format!("{} of {} checks failed:", failures.len(), report.checks().count());
                for r in failures {
                    msg.push_str("\n  ");
                    msg.push_str(&r.describe());
                }
                return Err(Failure::run(msg));
            }
            eprintln!("{}: all checks pass", report.name);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
