//! `socache`: plan cache allocations, print bounds, and replay trace
//! experiments from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use socache_core::heuristics::{self, GapReport};
use socache_core::indirect::{effective_direct_model, LayeredModel};
use socache_core::planner::{
    build_full_lp, build_reduced_lp, build_reduced_lp_from_weights, evaluate_cost,
    extract_cache_vector, solve_symmetric_closed, EvalMode,
};
use socache_core::prob::ProbabilityMatrix;
use socache_core::setcover::{weighted_setcover_bound, weighted_setcover_bound_sampled};
use socache_core::sim::{
    generate_bernoulli_trace, intervalize, run_experiment, EncounterTrace, ExperimentConfig,
    IntervalizedTrace, SharingMode,
};
use socache_core::{Error, Result};

/// Prints one line to stdout, exiting quietly if the downstream reader
/// closed the pipe (e.g. `socache ... | head`).
fn say_line(args: std::fmt::Arguments) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    if out
        .write_fmt(args)
        .and_then(|()| out.write_all(b"\n"))
        .is_err()
    {
        std::process::exit(0);
    }
}

macro_rules! say {
    ($($arg:tt)*) => { say_line(format_args!($($arg)*)) };
}

#[derive(Parser)]
#[command(
    name = "socache",
    version,
    about = "Cooperative pre-caching planner and contact-trace simulator"
)]
struct Cli {
    /// Worker threads for parallel sections; 0 uses every core. Builds
    /// without the "parallel" feature run sequentially regardless.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute a cache allocation for a probability-matrix JSON file.
    Solve(SolveArgs),
    /// Print analytic lower bounds and the optimality gap for a matrix.
    Bounds(BoundsArgs),
    /// Replay caching strategies over a contact trace and write cost CSV.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Exact LP over every encounter configuration (small groups only).
    Full,
    /// Exact LP over user subsets; the workhorse formulation.
    Reduced,
    /// Closed-form solve for uniform matrices.
    Symmetric,
    /// Probabilistic set-cover LP heuristic.
    Psc,
    /// Inverse-average-degree heuristic.
    Iad,
    /// Selector between PSC and IAD by their lower bounds.
    Algcov,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Direct,
    Indirect,
}

#[derive(Args)]
struct SolveArgs {
    /// Probability-matrix JSON file ({"n": ..., "p": [[...]]}).
    matrix: PathBuf,

    #[arg(long, value_enum)]
    method: Method,

    /// Sharing model to plan for. Indirect planning treats the matrix as
    /// per-segment probabilities and optimizes over relay paths.
    #[arg(long, value_enum, default_value = "direct")]
    mode: Mode,

    /// Relay segments within the deadline (indirect mode only).
    #[arg(long, default_value_t = 1)]
    segments: usize,

    /// Emit the solution record as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct BoundsArgs {
    /// Probability-matrix JSON file.
    matrix: PathBuf,

    /// Samples for the estimated set-cover bound on groups too large to
    /// enumerate exactly.
    #[arg(long, default_value_t = 2000)]
    samples: u64,

    /// Seed for the sampled estimate.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Emit the bound record as JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration JSON file.
    config: PathBuf,

    /// Contact-event CSV to replay (t_sec,user_a,user_b[,begin|end]).
    #[arg(long, conflicts_with_all = ["synthetic", "windows"])]
    trace: Option<PathBuf>,

    /// Keep a contact only if it covers at least this fraction of an
    /// interval; 0 keeps any contact.
    #[arg(long, default_value_t = 0.0)]
    min_contact_fraction: f64,

    /// Probability-matrix JSON file for a synthetic Bernoulli trace.
    #[arg(long, requires = "windows")]
    synthetic: Option<PathBuf>,

    /// Intervals to generate for the synthetic trace.
    #[arg(long)]
    windows: Option<usize>,

    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Override the config's sharing mode.
    #[arg(long, value_enum)]
    mode: Option<Mode>,

    /// Where to write the cost-report CSV.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_jobs(cli.jobs);
    let result = match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let record = serde_json::json!({
                "error": err.to_string(),
                "kind": err.kind(),
            });
            eprintln!("{record}");
            ExitCode::from(1)
        }
    }
}

#[cfg(feature = "parallel")]
fn configure_jobs(jobs: usize) {
    if jobs > 0 {
        // Ignore failure: the global pool can only be set once (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
}

#[cfg(not(feature = "parallel"))]
fn configure_jobs(_jobs: usize) {}

fn read_matrix(path: &PathBuf) -> Result<ProbabilityMatrix> {
    let text = std::fs::read_to_string(path)?;
    ProbabilityMatrix::from_json_str(&text)
}

#[derive(Serialize)]
struct SolveRecord {
    method: &'static str,
    mode: &'static str,
    /// LP optimum for exact methods; the heuristic's lower bound otherwise.
    objective: f64,
    x: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    branch: Option<String>,
}

fn cmd_solve(args: SolveArgs) -> Result<()> {
    let pm = read_matrix(&args.matrix)?;
    let n = pm.n();
    if args.mode == Mode::Indirect && args.method != Method::Reduced {
        return Err(Error::invalid(
            "indirect planning is only available with --method reduced",
        ));
    }
    if args.segments == 0 {
        return Err(Error::invalid("--segments must be at least 1"));
    }

    let (objective, x, branch) = match args.method {
        Method::Full => {
            let solution = build_full_lp(&pm)?.solve()?;
            let (opt, _) = solution.optimal()?;
            (opt, extract_cache_vector(&solution, n)?, None)
        }
        Method::Reduced => {
            let lp = match args.mode {
                Mode::Direct => build_reduced_lp(&pm)?,
                Mode::Indirect => {
                    let model = LayeredModel::homogeneous(pm.clone(), args.segments)?;
                    let (_, weights) = effective_direct_model(&model)?;
                    build_reduced_lp_from_weights(&weights)?
                }
            };
            let solution = lp.solve()?;
            let (opt, _) = solution.optimal()?;
            (opt, extract_cache_vector(&solution, n)?, None)
        }
        Method::Symmetric => {
            let p = pm.uniform_p().ok_or_else(|| {
                Error::invalid("--method symmetric needs a uniform matrix (equal off-diagonals)")
            })?;
            let (x, cost) = solve_symmetric_closed(n, p)?;
            (cost.total, x, None)
        }
        Method::Psc => {
            let r = heuristics::psc(&pm)?;
            (r.lower_bound_used, r.x, None)
        }
        Method::Iad => {
            let r = heuristics::iad(&pm);
            (r.lower_bound_used, r.x, None)
        }
        Method::Algcov => {
            let r = heuristics::algcov(&pm)?;
            let branch = r.branch.map(|b| b.summary().to_string());
            (r.lower_bound_used, r.x, branch)
        }
    };

    let heuristic = matches!(args.method, Method::Psc | Method::Iad | Method::Algcov);
    let expected_cost = if heuristic && args.mode == Mode::Direct {
        evaluate_cost(&pm, &x, EvalMode::Exact).ok().map(|c| c.total)
    } else {
        None
    };

    let record = SolveRecord {
        method: method_name(args.method),
        mode: mode_name(args.mode),
        objective,
        x: x.values().to_vec(),
        expected_cost,
        branch,
    };
    if args.json {
        say!("{}", serde_json::to_string_pretty(&record)?);
    } else {
        say!("method: {}", record.method);
        if args.mode == Mode::Indirect {
            say!("mode: indirect ({} segments)", args.segments);
        }
        say!("objective: {:.6}", record.objective);
        say!("x: {}", join_values(&record.x));
        if let Some(cost) = record.expected_cost {
            say!("expected cost: {cost:.6}");
        }
        if let Some(branch) = &record.branch {
            say!("branch: {branch}");
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct BoundsRecord {
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    f_lb: Option<f64>,
    setcover_bound: f64,
    /// Present when the set-cover bound is a sampled estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    setcover_stderr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    optimum: Option<f64>,
    gap: GapReport,
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    let pm = read_matrix(&args.matrix)?;
    let n = pm.n();

    let f_lb = pm.uniform_p().map(|p| heuristics::lower_bound_flb(n, p));
    let (setcover, setcover_stderr) = match weighted_setcover_bound(&pm) {
        Ok(v) => (v, None),
        Err(Error::Capacity { .. }) => {
            let est = weighted_setcover_bound_sampled(&pm, args.seed, args.samples)?;
            (est.mean, Some(est.stderr))
        }
        Err(e) => return Err(e),
    };
    let optimum = if n <= 16 {
        match build_reduced_lp(&pm).and_then(|lp| lp.solve()) {
            Ok(solution) => Some(solution.optimal()?.0),
            // Groups whose tableau outgrows memory just omit the exact
            // optimum; the bounds are the point of this command anyway.
            Err(Error::Capacity { .. }) => None,
            Err(e) => return Err(e),
        }
    } else {
        None
    };
    let gap = match pm.uniform_p() {
        Some(p) => heuristics::gap_symmetric(n, p)?,
        None => heuristics::gap_asymmetric(&pm)?,
    };

    let record = BoundsRecord {
        n,
        f_lb,
        setcover_bound: setcover,
        setcover_stderr,
        optimum,
        gap,
    };
    if args.json {
        say!("{}", serde_json::to_string_pretty(&record)?);
    } else {
        say!("n: {n}");
        if let Some(f_lb) = record.f_lb {
            say!("f_lb: {f_lb:.6}");
        }
        match record.setcover_stderr {
            None => say!("setcover bound: {:.6}", record.setcover_bound),
            Some(se) => say!(
                "setcover bound: {:.6} (sampled estimate, stderr {:.6})",
                record.setcover_bound, se
            ),
        }
        if let Some(opt) = record.optimum {
            say!("optimum: {opt:.6}");
        }
        match &record.gap {
            GapReport::Symmetric {
                gap,
                p_star,
                worst_case,
            } => say!(
                "gap: {gap:.6} (symmetric; p* = {p_star:.6}, worst case {worst_case:.6})"
            ),
            GapReport::Asymmetric { gap, p_min, p_max } => {
                say!("gap: {gap:.6} (asymmetric; p in [{p_min:.6}, {p_max:.6}])")
            }
        }
    }
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let config_text = std::fs::read_to_string(&args.config)?;
    let mut cfg = ExperimentConfig::from_json_str(&config_text)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.sharing_mode = match mode {
            Mode::Direct => SharingMode::Direct,
            Mode::Indirect => SharingMode::Indirect,
        };
    }

    let itrace: IntervalizedTrace = match (&args.trace, &args.synthetic) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)?;
            let trace = EncounterTrace::from_csv_str(&text)?;
            intervalize(&trace, cfg.interval_seconds, args.min_contact_fraction)?
        }
        (None, Some(path)) => {
            let pm = read_matrix(path)?;
            let windows = args.windows.expect("clap enforces --windows");
            generate_bernoulli_trace(&pm, windows, cfg.seed)
        }
        (None, None) => {
            return Err(Error::invalid(
                "provide a contact trace (--trace) or a synthetic model (--synthetic + --windows)",
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with prevents this"),
    };

    let report = run_experiment(&cfg, &itrace)?;
    let csv = report.to_csv_string();
    std::fs::write(&args.out, &csv)?;
    say!(
        "wrote {} rows to {}",
        report.rows.len(),
        args.out.display()
    );
    Ok(())
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Full => "full",
        Method::Reduced => "reduced",
        Method::Symmetric => "symmetric",
        Method::Psc => "psc",
        Method::Iad => "iad",
        Method::Algcov => "algcov",
    }
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Direct => "direct",
        Mode::Indirect => "indirect",
    }
}

fn join_values(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| format!("{v:.6}"))
        .collect::<Vec<_>>()
        .join(" ")
}
