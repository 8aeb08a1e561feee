//! Command-line front end.
//!
//! [`parse_args`] turns an argument vector into a validated [`CliConfig`];
//! [`execute`] runs it, writing human-readable output to the given sink and
//! reports to CSV files. [`main_with_args`] ties both together and maps
//! failures to exit codes: 0 on success, 1 when a solve or a check fails, 2
//! on a usage error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use crate::convex::fixtures::{self, Fixture, FixtureReport, VerifyOptions};
use crate::cuts::{read_cuts_csv, write_cuts_csv};
use crate::model::{self, MultistageModel, DEFAULT_TREE_LIMIT};
use crate::portfolio::{self, ComparisonReport, PortfolioConfig};
use crate::sddp::{self, ErrorSchedule, Policy, RunOptions, RunReport, StoppingRule, UpperBoundMode};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Clap(#[from] clap::Error),
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Failure(String),
    #[error("{context}: {source}")]
    Io { context: String, source: io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Clap(e) => e.exit_code(),
            CliError::Usage(_) => 2,
            CliError::Failure(_) | CliError::Io { .. } => 1,
        }
    }
}

fn failure(e: impl std::fmt::Display) -> CliError {
    CliError::Failure(e.to_string())
}

fn io_error(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

const SCHEDULE_HELP: &str = "\
Accuracy schedule for stage solves after the first:
  exact            solve every subproblem to optimality
  const:D,E        absolute forward error D and backward error E
  reldecay:E,E0    relative error (1/k)[E - (E - E0)(t - 2)/(T - 2)], needs 0 <= E0 < E
  vanish:C,P       absolute errors C / k^P
  captable:IMAX    pivot caps growing from 0.4 IMAX with stage and iteration";

/// Parse a schedule descriptor such as `reldecay:0.1,0.01`.
pub fn parse_schedule(text: &str) -> Result<ErrorSchedule, String> {
    let (kind, rest) = match text.split_once(':') {
        Some((k, r)) => (k.trim(), Some(r)),
        None => (text.trim(), None),
    };
    let numbers = |want: usize| -> Result<Vec<f64>, String> {
        let rest = rest.ok_or_else(|| format!("`{kind}` needs {want} comma-separated values"))?;
        let vals: Vec<f64> = rest
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| format!("`{}` is not a number", v.trim())))
            .collect::<Result<_, _>>()?;
        if vals.len() != want {
            return Err(format!("`{kind}` needs {want} values, got {}", vals.len()));
        }
        Ok(vals)
    };
    let schedule = match kind {
        "exact" if rest.is_none() => ErrorSchedule::Exact,
        "exact" => return Err("`exact` takes no values".into()),
        "const" => {
            let v = numbers(2)?;
            ErrorSchedule::ConstantAbsolute { delta: v[0], eps: v[1] }
        }
        "reldecay" => {
            let v = numbers(2)?;
            ErrorSchedule::RelativeDecay { eps_bar: v[0], eps0: v[1] }
        }
        "vanish" => {
            let v = numbers(2)?;
            ErrorSchedule::VanishingAbsolute { c: v[0], exponent: v[1] }
        }
        "captable" => {
            let raw = rest.ok_or("`captable` needs I_max")?.trim();
            let i_max = raw.parse::<usize>().map_err(|_| format!("`{raw}` is not a pivot count"))?;
            ErrorSchedule::PivotCapTable { i_max }
        }
        other => return Err(format!("unknown schedule `{other}`; expected exact, const, reldecay, vanish or captable")),
    };
    schedule.validate().map_err(|e| e.to_string())?;
    Ok(schedule)
}

/// Parse an upper-bound descriptor: `none`, `enumerate`, `window:N` or
/// `fresh:N`.
pub fn parse_upper_bound(text: &str) -> Result<UpperBoundMode, String> {
    let samples = |v: &str| -> Result<usize, String> {
        match v.trim().parse::<usize>() {
            Ok(n) if n >= 2 => Ok(n),
            _ => Err(format!("`{v}` is not a sample count of at least 2")),
        }
    };
    match text.split_once(':') {
        None if text == "none" => Ok(UpperBoundMode::None),
        None if text == "enumerate" => Ok(UpperBoundMode::Enumerate),
        Some(("window", n)) => Ok(UpperBoundMode::Window { samples: samples(n)? }),
        Some(("fresh", n)) => Ok(UpperBoundMode::Fresh { samples: samples(n)? }),
        _ => Err(format!("unknown upper bound `{text}`; expected none, enumerate, window:N or fresh:N")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Sddp,
    Isddp,
}

#[derive(Debug, Parser)]
#[command(name = "isddp", version, about = "SDDP and inexact SDDP for multistage stochastic linear programs")]
struct RawCli {
    /// Worker threads for parallel solves.
    #[arg(long, global = true, env = "ISDDP_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: RawCommand,
}

#[derive(Debug, Subcommand)]
enum RawCommand {
    /// Train a policy on a model file.
    Solve(RawSolve),
    /// Simulate the policy stored in a cut dump.
    Simulate(SimulateArgs),
    /// Compare SDDP with the cap-table variant on a generated portfolio.
    BenchPortfolio(BenchArgs),
    /// Check a cut dump against exact cost-to-go values.
    VerifyCuts(VerifyCutsArgs),
    /// Check inexact cuts for convex value functions on fixtures.
    VerifyNlcuts(VerifyNlcutsArgs),
}

#[derive(Debug, Args)]
struct RawSolve {
    #[arg(long)]
    model: PathBuf,
    /// `sddp` forces the exact schedule; `isddp` needs `--schedule`.
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_parser = parse_schedule, long_help = SCHEDULE_HELP)]
    schedule: Option<ErrorSchedule>,
    /// Stop once (UB − LB)/|UB| falls below this.
    #[arg(long, default_value_t = 0.1)]
    gap_tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `none`, `enumerate`, `window:N` (recent forward costs) or `fresh:N`.
    #[arg(long, default_value = "window:100", value_parser = parse_upper_bound)]
    ub: UpperBoundMode,
    /// Compute the upper bound every this many iterations.
    #[arg(long, default_value_t = 1)]
    ub_every: usize,
    /// Per-iteration report; printed to standard output when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the final cut pools here.
    #[arg(long)]
    cuts: Option<PathBuf>,
    /// Record wall time in the report's `millis` column.
    #[arg(long)]
    timing: bool,
}

/// Validated `solve` options.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub model: PathBuf,
    pub schedule: ErrorSchedule,
    pub gap_tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub upper_bound: UpperBoundMode,
    pub ub_every: usize,
    pub report: Option<PathBuf>,
    pub cuts: Option<PathBuf>,
    pub timing: bool,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Cut dump written by `solve --cuts`.
    #[arg(long)]
    pub cuts: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub sim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-scenario costs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct BenchArgs {
    /// Realizations per stage.
    #[arg(long = "M", default_value_t = 10)]
    pub m: usize,
    /// Stages.
    #[arg(long = "T", default_value_t = 6)]
    pub t: usize,
    /// Risky assets.
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub iters: usize,
    /// Shared simulation scenarios.
    #[arg(long, default_value_t = 500)]
    pub sim: usize,
    /// Single-row comparison summary.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-iteration traces of both runs; defaults to `<out>-traces.csv`.
    #[arg(long)]
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct VerifyCutsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cuts: PathBuf,
    /// Reachable states sampled per stage.
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct VerifyNlcutsArgs {
    /// Built-in fixture to run; repeatable. All built-ins run when neither
    /// this nor `--file` is given.
    #[arg(long)]
    pub fixture: Vec<String>,
    /// Fixture JSON file; repeatable.
    #[arg(long)]
    pub file: Vec<PathBuf>,
    /// Grid step on the parameter set.
    #[arg(long, default_value_t = 1e-3)]
    pub x_step: f64,
    /// Grid points per multiplier coordinate.
    #[arg(long, default_value_t = 101)]
    pub dual_points: usize,
    /// List the built-in fixtures and exit.
    #[arg(long)]
    pub list: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    Solve(SolveConfig),
    Simulate(SimulateArgs),
    BenchPortfolio(BenchArgs),
    VerifyCuts(VerifyCutsArgs),
    VerifyNlcuts(VerifyNlcutsArgs),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub threads: Option<usize>,
    pub command: Command,
}

/// Parse and validate an argument vector, program name first.
pub fn parse_args<I, T>(argv: I) -> Result<CliConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let raw = RawCli::try_parse_from(argv)?;
    if raw.threads == Some(0) {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let command = match raw.command {
        RawCommand::Solve(s) => Command::Solve(resolve_solve(s)?),
        RawCommand::Simulate(a) => Command::Simulate(a),
        RawCommand::BenchPortfolio(a) => {
            if a.m == 0 || a.t < 2 || a.n == 0 {
                return Err(CliError::Usage("bench-portfolio needs M ≥ 1, T ≥ 2 and n ≥ 1".into()));
            }
            Command::BenchPortfolio(a)
        }
        RawCommand::VerifyCuts(a) => Command::VerifyCuts(a),
        RawCommand::VerifyNlcuts(a) => {
            if !(a.x_step > 0.0) || a.dual_points < 2 {
                return Err(CliError::Usage("--x-step must be positive and --dual-points at least 2".into()));
            }
            Command::VerifyNlcuts(a)
        }
    };
    Ok(CliConfig { threads: raw.threads, command })
}

fn resolve_solve(s: RawSolve) -> Result<SolveConfig, CliError> {
    let schedule = match (s.mode, s.schedule) {
        (Some(Mode::Sddp), None | Some(ErrorSchedule::Exact)) => ErrorSchedule::Exact,
        (Some(Mode::Sddp), Some(_)) => {
            return Err(CliError::Usage("--mode sddp solves exactly; drop --schedule or use --mode isddp".into()))
        }
        (Some(Mode::Isddp), None) => return Err(CliError::Usage("--mode isddp needs --schedule".into())),
        (_, Some(schedule)) => schedule,
        (None, None) => ErrorSchedule::Exact,
    };
    if s.gap_tol.is_nan() {
        return Err(CliError::Usage("--gap-tol must be a number".into()));
    }
    Ok(SolveConfig {
        model: s.model,
        schedule,
        gap_tol: s.gap_tol,
        max_iters: s.max_iters,
        seed: s.seed,
        upper_bound: s.ub,
        ub_every: s.ub_every,
        report: s.report,
        cuts: s.cuts,
        timing: s.timing,
    })
}

/// Parse, run, report errors on standard error, and return the exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let result = parse_args(argv).and_then(|config| {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        execute(&config, &mut lock)
    });
    match result {
        Ok(()) => 0,
        Err(CliError::Clap(e)) => {
            let _ = e.print();
            e.exit_code()
        }
        Err(e) => {
            eprintln!("isddp: {e}");
            e.exit_code()
        }
    }
}

/// Run a parsed command; `out` receives summaries and tables. With a thread
/// count the output is buffered until the command finishes.
pub fn execute(config: &CliConfig, out: &mut dyn Write) -> Result<(), CliError> {
    match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().map_err(failure)?;
            let mut buffer = Vec::new();
            let result = pool.install(|| dispatch(&config.command, &mut buffer));
            out.write_all(&buffer).map_err(out_err)?;
            result
        }
        None => dispatch(&config.command, out),
    }
}

fn dispatch(command: &Command, out: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Solve(c) => solve(c, out),
        Command::Simulate(a) => simulate(a, out),
        Command::BenchPortfolio(a) => bench(a, out),
        Command::VerifyCuts(a) => verify_cuts(a, out),
        Command::VerifyNlcuts(a) => verify_nlcuts(a, out),
    }
}

fn read_model(path: &Path) -> Result<MultistageModel, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_error(format!("reading {}", path.display())))?;
    model::load_model(&text).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))
}

fn read_policy(model: &MultistageModel, path: &Path) -> Result<Policy, CliError> {
    let file = File::open(path).map_err(io_error(format!("reading {}", path.display())))?;
    let horizon = model.horizon;
    let cuts = read_cuts_csv(file, |s| (2..=horizon).contains(&s).then(|| model.dim(s - 1)))
        .map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
    Policy::from_cuts(model, cuts).map_err(failure)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_error(format!("creating {}", path.display())))
}

fn out_err(e: io::Error) -> CliError {
    CliError::Io { context: "writing output".into(), source: e }
}

fn solve(c: &SolveConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let model = read_model(&c.model)?;
    let options = RunOptions {
        stopping: StoppingRule { gap_tol: c.gap_tol, max_iters: c.max_iters, ub_every: c.ub_every },
        upper_bound: c.upper_bound,
        confidence: 0.975,
        threads: None,
        initial_bounds: None,
        record_time: c.timing,
    };
    let report = sddp::run(&model, &c.schedule, &options, c.seed).map_err(failure)?;
    if let Some(path) = &c.cuts {
        let w = create(path)?;
        write_cuts_csv(&report.policy.pools, w).map_err(failure)?;
    }
    match &c.report {
        Some(path) => {
            emit_report(Report::Run(&report), path)?;
            let last = report.records.last();
            writeln!(
                out,
                "iterations {}  lb {}  ub {}  gap {}  pivots {}  converged {}",
                report.records.len(),
                last.map_or(String::from("-"), |r| fmt_sig(r.lower_bound)),
                last.and_then(|r| r.ub_upper).map_or(String::from("-"), fmt_sig),
                last.and_then(|r| r.gap).map_or(String::from("-"), fmt_sig),
                report.total_pivots(),
                report.converged
            )
            .map_err(out_err)?;
        }
        None => write_report(Report::Run(&report), &mut *out).map_err(out_err)?,
    }
    Ok(())
}

fn simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.sim == 0 {
        return Err(CliError::Usage("--sim must be at least 1".into()));
    }
    let model = read_model(&a.model)?;
    let policy = read_policy(&model, &a.cuts)?;
    let scenarios = portfolio::simulation_scenarios(&model, a.sim, a.seed);
    let costs = policy.evaluate(&model, &scenarios).map_err(failure)?;
    if let Some(path) = &a.out {
        let mut w = create(path)?;
        let write = |w: &mut BufWriter<File>| -> io::Result<()> {
            writeln!(w, "scenario,cost")?;
            for (i, c) in costs.iter().enumerate() {
                writeln!(w, "{},{}", i + 1, fmt_sig(*c))?;
            }
            w.flush()
        };
        write(&mut w).map_err(io_error(format!("writing {}", path.display())))?;
    }
    let lb = sddp::lower_bound(&model, &policy).map_err(failure)?;
    let (mean, hi) = sddp::confidence_upper(&costs, 0.975);
    writeln!(out, "scenarios {}  mean {}  ub_975 {}  lb {}", costs.len(), fmt_sig(mean), fmt_sig(hi), fmt_sig(lb))
        .map_err(out_err)
}

fn default_traces_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    out.with_file_name(format!("{stem}-traces.csv"))
}

fn bench(a: &BenchArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let config = PortfolioConfig::new(a.m, a.t, a.n, a.seed);
    let model = portfolio::generate_instance(&config);
    let (report, i_max) = portfolio::bench_sddp_vs_isddp(&model, a.iters, a.sim, a.seed, None).map_err(failure)?;
    let extra = [
        ("M", a.m.to_string()),
        ("T", a.t.to_string()),
        ("n", a.n.to_string()),
        ("seed", a.seed.to_string()),
        ("i_max", i_max.to_string()),
    ];
    let mut w = create(&a.out)?;
    write_comparison(&report, &extra, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_error(format!("writing {}", a.out.display())))?;
    let traces = a.traces.clone().unwrap_or_else(|| default_traces_path(&a.out));
    let mut w = create(&traces)?;
    write_traces(&[("sddp", &report.run_a), ("isddp", &report.run_b)], &mut w)
        .and_then(|_| w.flush())
        .map_err(io_error(format!("writing {}", traces.display())))?;
    writeln!(
        out,
        "iterations {}  I_max {}  pivots sddp {} isddp {}  work reduction {}%  policy gap {}%",
        report.iterations,
        i_max,
        report.pivots_a,
        report.pivots_b,
        fmt_sig(report.work_reduction_percent),
        fmt_sig(report.policy_gap_percent)
    )
    .map_err(out_err)
}

/// Per-stage outcome of checking stored cuts against exact cost-to-go values.
#[derive(Debug, Clone, PartialEq)]
pub struct StageCutCheck {
    pub stage: usize,
    pub cuts: usize,
    pub states: usize,
    /// Largest `C(x) − Q_t(x)` over cuts and states.
    pub max_violation: f64,
}

/// Evaluate every cut of `policy` at `samples` reachable states per stage
/// and compare with `Q_t` from the tail extensive form.
pub fn check_policy_cuts(
    model: &MultistageModel,
    policy: &Policy,
    samples: usize,
    seed: u64,
) -> Result<Vec<StageCutCheck>, CliError> {
    use rayon::prelude::*;
    let states = model::sample_reachable_states(model, samples, seed).map_err(failure)?;
    (2..=model.horizon)
        .map(|t| {
            let pool = policy.pool(t).expect("stages 2..=T have pools");
            let xs = &states[t - 2];
            let values: Vec<f64> = xs
                .par_iter()
                .map(|x| model::tail_value(model, t, x, DEFAULT_TREE_LIMIT))
                .collect::<Result<_, _>>()
                .map_err(failure)?;
            let max_violation = xs
                .iter()
                .zip(&values)
                .flat_map(|(x, q)| pool.cuts().iter().map(move |c| c.value(x) - q))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(StageCutCheck { stage: t, cuts: pool.len(), states: xs.len(), max_violation })
        })
        .collect()
}

fn verify_cuts(a: &VerifyCutsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let model = read_model(&a.model)?;
    let policy = read_policy(&model, &a.cuts)?;
    let checks = check_policy_cuts(&model, &policy, a.samples, a.seed)?;
    writeln!(out, "{:>5}  {:>6}  {:>6}  {:>14}  result", "stage", "cuts", "states", "max C - Q").map_err(out_err)?;
    let mut bad = 0;
    for c in &checks {
        let ok = c.max_violation <= a.tol;
        bad += usize::from(!ok);
        writeln!(
            out,
            "{:>5}  {:>6}  {:>6}  {:>14.6e}  {}",
            c.stage,
            c.cuts,
            c.states,
            c.max_violation,
            if ok { "pass" } else { "FAIL" }
        )
        .map_err(out_err)?;
    }
    if bad > 0 {
        return Err(CliError::Failure(format!("{bad} stage(s) hold cuts above the cost-to-go")));
    }
    Ok(())
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

/// One row of the `verify-nlcuts` table.
pub fn fixture_row(r: &FixtureReport) -> String {
    format!(
        "{:<22} {:>5}  {:<5} {:<5} {:<5} {:<5} {:<5} {:<5}  {}",
        r.name,
        r.grid_points,
        mark(r.constant_issues.is_empty() && r.inputs_ok()),
        mark(r.references_agree()),
        mark(r.cuts_valid()),
        mark(r.gaps_bounded()),
        mark(r.refinement_ordered()),
        mark(r.duals_bounded()),
        mark(r.passed())
    )
}

fn verify_nlcuts(a: &VerifyNlcutsArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.list {
        for fx in fixtures::builtin_fixtures().map_err(failure)? {
            writeln!(out, "{:<22} {}", fx.name, fx.description).map_err(out_err)?;
        }
        return Ok(());
    }
    let mut selected: Vec<Fixture> = Vec::new();
    for name in &a.fixture {
        selected.push(fixtures::builtin_fixture(name).map_err(|e| CliError::Usage(e.to_string()))?);
    }
    for path in &a.file {
        selected.push(fixtures::load_fixture(path).map_err(failure)?);
    }
    if a.fixture.is_empty() && a.file.is_empty() {
        selected = fixtures::builtin_fixtures().map_err(failure)?;
    }
    let opts = VerifyOptions { x_step: a.x_step, dual_points: a.dual_points, ..VerifyOptions::default() };
    writeln!(
        out,
        "{:<22} {:>5}  {:<5} {:<5} {:<5} {:<5} {:<5} {:<5}  result",
        "fixture", "grid", "input", "refs", "valid", "gap", "refin", "duals"
    )
    .map_err(out_err)?;
    let mut failed = Vec::new();
    for fx in &selected {
        let report = fixtures::verify_fixture(fx, &opts).map_err(failure)?;
        writeln!(out, "{}", fixture_row(&report)).map_err(out_err)?;
        for issue in &report.constant_issues {
            writeln!(out, "    {issue}").map_err(out_err)?;
        }
        if !report.passed() {
            failed.push(report.name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failure(format!("failed: {}", failed.join(", "))))
    }
}

/// A report that can be written as CSV.
#[derive(Debug, Clone, Copy)]
pub enum Report<'a> {
    Run(&'a RunReport),
    Comparison(&'a ComparisonReport),
}

/// Write `report` to `path` as CSV.
pub fn emit_report(report: Report<'_>, path: &Path) -> Result<(), CliError> {
    let mut w = create(path)?;
    write_report(report, &mut w)
        .and_then(|_| w.flush())
        .map_err(io_error(format!("writing {}", path.display())))
}

pub const RUN_COLUMNS: [&str; 8] = ["iter", "lb", "ub_mean", "ub_975", "gap", "pivots_fwd", "pivots_bwd", "millis"];

pub const COMPARISON_COLUMNS: [&str; 9] = [
    "iterations",
    "pivots_sddp",
    "pivots_isddp",
    "work_reduction_percent",
    "cost_sddp",
    "cost_isddp",
    "policy_gap_percent",
    "lb_sddp",
    "lb_isddp",
];

/// Run reports get one row per iteration; comparisons a single row.
pub fn write_report(report: Report<'_>, w: &mut dyn Write) -> io::Result<()> {
    match report {
        Report::Run(r) => {
            writeln!(w, "{}", RUN_COLUMNS.join(","))?;
            for rec in &r.records {
                writeln!(w, "{}", run_row(rec).join(","))?;
            }
            Ok(())
        }
        Report::Comparison(c) => write_comparison(c, &[], w),
    }
}

fn run_row(rec: &sddp::IterationRecord) -> Vec<String> {
    let opt = |v: Option<f64>| v.map_or(String::new(), fmt_sig);
    vec![
        rec.iteration.to_string(),
        fmt_sig(rec.lower_bound),
        opt(rec.ub_mean),
        opt(rec.ub_upper),
        opt(rec.gap),
        rec.pivots_forward.to_string(),
        rec.pivots_backward.to_string(),
        rec.millis.to_string(),
    ]
}

fn write_comparison(c: &ComparisonReport, leading: &[(&str, String)], w: &mut dyn Write) -> io::Result<()> {
    let mut header: Vec<&str> = leading.iter().map(|(k, _)| *k).collect();
    header.extend(COMPARISON_COLUMNS);
    let lb = |r: &RunReport| r.final_lower_bound().map_or(String::new(), fmt_sig);
    let mut row: Vec<String> = leading.iter().map(|(_, v)| v.clone()).collect();
    row.extend([
        c.iterations.to_string(),
        c.pivots_a.to_string(),
        c.pivots_b.to_string(),
        fmt_sig(c.work_reduction_percent),
        fmt_sig(c.cost_mean_a),
        fmt_sig(c.cost_mean_b),
        fmt_sig(c.policy_gap_percent),
        lb(&c.run_a),
        lb(&c.run_b),
    ]);
    writeln!(w, "{}", header.join(","))?;
    writeln!(w, "{}", row.join(","))
}

/// Per-iteration rows of several labelled runs.
pub fn write_traces(runs: &[(&str, &RunReport)], w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "run,{}", RUN_COLUMNS.join(","))?;
    for (label, r) in runs {
        for rec in &r.records {
            writeln!(w, "{label},{}", run_row(rec).join(","))?;
        }
    }
    Ok(())
}

/// `v` with 12 significant digits, trailing zeros trimmed; plain notation
/// for magnitudes in `[1e−5, 1e12)`, scientific otherwise.
pub fn fmt_sig(v: f64) -> String {
    const DIGITS: i32 = 12;
    if !v.is_finite() {
        return if v.is_nan() { "nan".into() } else if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..DIGITS).contains(&exp) {
        let decimals = (DIGITS - 1 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Read a run report back as `(iter, lb)` pairs.
pub fn read_lower_bounds(text: &str) -> Result<Vec<(usize, f64)>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty report")?;
    if header != RUN_COLUMNS.join(",") {
        return Err(format!("unexpected header `{header}`"));
    }
    lines
        .map(|l| {
            let mut f = l.split(',');
            let iter = f.next().and_then(|v| v.parse().ok()).ok_or_else(|| format!("bad row `{l}`"))?;
            let lb = f.next().and_then(|v| v.parse().ok()).ok_or_else(|| format!("bad row `{l}`"))?;
            Ok((iter, lb))
        })
        .collect()
}
