//! Command-line front end: `solve`, `bench`, `check-tilt`, `inspect`, `gen`.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::{ArgAction, ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bench::suite::trace_csv;
use crate::bench::{generate, problem_spec, run_suite, suite, SuiteOutcome};
use crate::diagnostics::check_tilt_stability;
use crate::error::{Error, Result};
use crate::problem::{ProblemInstance, ProblemSpec};
use crate::solvers::{solve, Extrapolation, Method, SolverConfig, SolverTrace, Status, StepMode};

pub mod exit {
    pub const OK: i32 = 0;
    pub const BAD_INPUT: i32 = 2;
    pub const MAX_ITERS: i32 = 3;
    pub const DOMAIN: i32 = 4;
    pub const BENCH_FAILED: i32 = 5;
    pub const NOT_TILT_STABLE: i32 = 6;
}

/// Schema version accepted in `--config` files.
pub const CONFIG_VERSION: u32 = 1;

/// Contents of a `--config` file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { version: CONFIG_VERSION, solver: SolverConfig::default() }
    }
}

#[derive(Debug, Parser)]
#[command(name = "polynewt", version, about = "Effective-subspace Newton methods for polyhedral regularizers")]
pub struct Cli {
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    pub verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one problem file; exit 0 converged, 3 max iterations, 4 domain failure.
    Solve(SolveArgs),
    /// Run a benchmark suite; exit 0 iff every run converged, 5 otherwise.
    Bench(BenchArgs),
    /// Tilt-stability test at a candidate point; exit 0 stable, 6 not stable.
    CheckTilt(TiltArgs),
    /// Summarize a trace CSV written by `solve` or `bench`.
    Inspect(InspectArgs),
    /// Write the instances of a suite as problem files.
    Gen(GenArgs),
}

#[derive(Debug, Args)]
pub struct SolverFlags {
    /// JSON config `{"version": 1, "solver": {...}}`; flags given on the command line win.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config field by dotted path, e.g. `solver.kkt_tol=1e-6`. Applied after --config.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, default_value_t = SolverConfig::default().method)]
    pub method: Method,
    #[arg(long, default_value_t = SolverConfig::default().kkt_tol)]
    pub kkt_tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().switch_tol)]
    pub switch_tol: f64,
    #[arg(long, default_value_t = SolverConfig::default().max_iters)]
    pub max_iters: usize,
    /// `lipschitz`, `fixed:α` or `bt:α0,ρ[,γ]` (γ defaults to 2).
    #[arg(long, default_value_t = StepArg(SolverConfig::default().step))]
    pub step: StepArg,
    /// `fista`, `cd:d` or `llt:p,q`.
    #[arg(long, default_value_t = ExtrapolationArg(SolverConfig::default().extrapolation))]
    pub extrapolation: ExtrapolationArg,
    /// Accept Newton candidates without the KKT comparison.
    #[arg(long)]
    pub no_safeguard: bool,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Problem file (JSON).
    #[arg(long, value_name = "FILE")]
    pub problem: PathBuf,
    /// Starting point as a JSON array; zero if absent.
    #[arg(long, value_name = "FILE")]
    pub x0: Option<PathBuf>,
    /// Directory for trace.csv and summary.json.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverFlags,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// One of paper51, toy, poisson.
    #[arg(long)]
    pub suite: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Directory for traces, summary.csv, manifest.json and images.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TiltArgs {
    #[arg(long, value_name = "FILE")]
    pub problem: PathBuf,
    /// Candidate point as a JSON array.
    #[arg(long, value_name = "FILE")]
    pub point: PathBuf,
    /// Also write the report to DIR/tilt.json.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Trace CSV.
    #[arg(long, value_name = "FILE")]
    pub trace: PathBuf,
    /// Print the summary as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub suite: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepArg(pub StepMode);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtrapolationArg(pub Extrapolation);

fn numbers(s: &str, what: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad number `{t}` in {what}: {e}")))
        .collect()
}

impl FromStr for StepArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        let mode = match (head, numbers(rest, "--step").as_deref()) {
            ("lipschitz", _) if rest.is_empty() => StepMode::InverseLipschitz,
            ("fixed", Ok([alpha])) => StepMode::Fixed { alpha: *alpha },
            ("bt", Ok([alpha0, shrink])) => StepMode::Backtracking { alpha0: *alpha0, shrink: *shrink, growth: 2.0 },
            ("bt", Ok([alpha0, shrink, growth])) => {
                StepMode::Backtracking { alpha0: *alpha0, shrink: *shrink, growth: *growth }
            }
            (_, Err(e)) if !rest.is_empty() => return Err(e.clone()),
            _ => return Err(format!("expected lipschitz, fixed:α or bt:α0,ρ[,γ], got `{s}`")),
        };
        Ok(StepArg(mode))
    }
}

impl fmt::Display for StepArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            StepMode::InverseLipschitz => write!(f, "lipschitz"),
            StepMode::Fixed { alpha } => write!(f, "fixed:{alpha}"),
            StepMode::Backtracking { alpha0, shrink, growth } => write!(f, "bt:{alpha0},{shrink},{growth}"),
        }
    }
}

impl FromStr for ExtrapolationArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (head, rest) = s.split_once(':').unwrap_or((s, ""));
        let rule = match (head, numbers(rest, "--extrapolation").as_deref()) {
            ("fista", _) if rest.is_empty() => Extrapolation::OriginalFista,
            ("cd", Ok([d])) => Extrapolation::ChambolleDossal { d: *d },
            ("llt", Ok([p, q])) => Extrapolation::LiangLuoTao { p: *p, q: *q },
            (_, Err(e)) if !rest.is_empty() => return Err(e.clone()),
            _ => return Err(format!("expected fista, cd:d or llt:p,q, got `{s}`")),
        };
        Ok(ExtrapolationArg(rule))
    }
}

impl fmt::Display for ExtrapolationArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Extrapolation::OriginalFista => write!(f, "fista"),
            Extrapolation::ChambolleDossal { d } => write!(f, "cd:{d}"),
            Extrapolation::LiangLuoTao { p, q } => write!(f, "llt:{p},{q}"),
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { exit::BAD_INPUT } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return exit::BAD_INPUT;
        }
    };
    init_logging(cli.verbose, cli.quiet);
    let sub = matches.subcommand().map(|(_, m)| m);
    let result = match &cli.command {
        Command::Solve(a) => cmd_solve(a, sub.expect("subcommand matches")),
        Command::Bench(a) => cmd_bench(a),
        Command::CheckTilt(a) => cmd_check_tilt(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit::BAD_INPUT
        }
    }
}

fn init_logging(verbose: u8, quiet: bool) {
    let level = match (quiet, verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        (false, 2) => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

/// Reads and parses a JSON file; parse errors carry `path:line:column`.
fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))
}

fn read_problem(path: &Path) -> Result<ProblemInstance> {
    let spec: ProblemSpec = read_json(path)?;
    ProblemInstance::from_spec(&spec).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))
}

fn read_point(path: &Path, n: usize) -> Result<DVector<f64>> {
    let x: Vec<f64> = read_json(path)?;
    if x.len() != n {
        return Err(Error::Invalid(format!("{}: point has {} entries, problem has n = {n}", path.display(), x.len())));
    }
    Ok(DVector::from_vec(x))
}

/// Sets `root.a.b = value`, creating objects along the path.
fn set_path(root: &mut Value, path: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Invalid(format!("bad override path `{path}`")));
    }
    for k in &keys[..keys.len() - 1] {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Invalid(format!("override `{path}`: `{k}` is not inside an object")))?;
        cur = obj.entry(k.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    let obj = cur
        .as_object_mut()
        .ok_or_else(|| Error::Invalid(format!("override `{path}` does not point into an object")))?;
    obj.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

/// Applies `PATH=VALUE` overrides; VALUE is JSON, or a bare string if it does not parse.
pub fn apply_overrides(config: &RunConfig, overrides: &[String]) -> Result<RunConfig> {
    if overrides.is_empty() {
        return Ok(config.clone());
    }
    let mut v = serde_json::to_value(config)?;
    for o in overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| Error::Invalid(format!("override `{o}` is not PATH=VALUE")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut v, path.trim(), value)?;
    }
    serde_json::from_value(v).map_err(|e| Error::Invalid(format!("after --set: {e}")))
}

fn from_cli(m: &ArgMatches, id: &str) -> bool {
    m.value_source(id) == Some(ValueSource::CommandLine)
}

/// Default config, then the config file, then `--set`, then explicit flags.
pub fn resolve_solver_config(flags: &SolverFlags, m: &ArgMatches) -> Result<SolverConfig> {
    let base = match &flags.config {
        Some(p) => read_json::<RunConfig>(p)?,
        None => RunConfig::default(),
    };
    if base.version != CONFIG_VERSION {
        return Err(Error::Invalid(format!(
            "config version {} is not supported (expected {CONFIG_VERSION})",
            base.version
        )));
    }
    let mut cfg = apply_overrides(&base, &flags.overrides)?.solver;
    if from_cli(m, "method") {
        cfg.method = flags.method;
    }
    if from_cli(m, "kkt_tol") {
        cfg.kkt_tol = flags.kkt_tol;
    }
    if from_cli(m, "switch_tol") {
        cfg.switch_tol = flags.switch_tol;
    }
    if from_cli(m, "max_iters") {
        cfg.max_iters = flags.max_iters;
    }
    if from_cli(m, "step") {
        cfg.step = flags.step.0;
    }
    if from_cli(m, "extrapolation") {
        cfg.extrapolation = flags.extrapolation.0;
    }
    if flags.no_safeguard {
        cfg.safeguard = false;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Serialize)]
struct SolveSummary<'a> {
    format_version: u32,
    problem: &'a str,
    config: &'a SolverConfig,
    status: Status,
    iterations: usize,
    final_kkt: f64,
    final_objective: f64,
    newton_steps_accepted: usize,
    newton_steps_rejected: usize,
    x: Vec<f64>,
}

fn status_code(s: Status) -> i32 {
    match s {
        Status::Converged => exit::OK,
        Status::MaxIters => exit::MAX_ITERS,
        Status::DomainFailure => exit::DOMAIN,
    }
}

fn fmt_point(x: &DVector<f64>) -> String {
    let shown: Vec<String> = x.iter().take(8).map(|v| format!("{v:.6}")).collect();
    let more = if x.len() > 8 { format!(", … ({} entries)", x.len()) } else { String::new() };
    format!("({}{more})", shown.join(", "))
}

fn cmd_solve(a: &SolveArgs, m: &ArgMatches) -> Result<i32> {
    let cfg = resolve_solver_config(&a.solver, m)?;
    let prob = read_problem(&a.problem)?;
    let x0 = match &a.x0 {
        Some(p) => read_point(p, prob.n)?,
        None => DVector::zeros(prob.n),
    };
    let trace = match solve(&prob, &cfg, &x0) {
        Ok(t) => t,
        Err(Error::Domain) => {
            eprintln!("error: starting point is outside the domain of the loss");
            return Ok(exit::DOMAIN);
        }
        Err(e) => return Err(e),
    };
    print_solve(&prob, &cfg, &trace);
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("trace.csv"), trace_csv(&trace, None))?;
        let summary = SolveSummary {
            format_version: 1,
            problem: &prob.name,
            config: &cfg,
            status: trace.status,
            iterations: trace.iterations(),
            final_kkt: trace.final_kkt(),
            final_objective: trace.final_objective(),
            newton_steps_accepted: trace.newton_accepted(),
            newton_steps_rejected: trace.newton_rejected(),
            x: trace.x.iter().cloned().collect(),
        };
        fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    }
    Ok(status_code(trace.status))
}

fn print_solve(prob: &ProblemInstance, cfg: &SolverConfig, t: &SolverTrace) {
    println!("problem      {}", prob.name);
    println!("method       {}", cfg.method);
    println!("status       {:?}", t.status);
    println!("iterations   {}", t.iterations());
    println!("objective    {:.12e}", t.final_objective());
    println!("kkt          {:.3e}", t.final_kkt());
    println!("newton       {} accepted, {} rejected", t.newton_accepted(), t.newton_rejected());
    println!("x            {}", fmt_point(&t.x));
}

fn cmd_bench(a: &BenchArgs) -> Result<i32> {
    let specs = suite(&a.suite, a.seed)?;
    let outcome = run_suite(&specs, a.out.as_deref())?;
    print_bench(&outcome);
    Ok(if outcome.all_converged() { exit::OK } else { exit::BENCH_FAILED })
}

fn print_bench(outcome: &SuiteOutcome) {
    println!(
        "{:<16} {:<13} {:<10} {:>6} {:>10} {:>7} {:>6} {:>8}",
        "experiment", "method", "status", "iters", "kkt", "newton", "order", "recall"
    );
    for r in outcome.records() {
        let status = r.status.map_or_else(|| "error".to_string(), |s| format!("{s:?}"));
        println!(
            "{:<16} {:<13} {:<10} {:>6} {:>10.2e} {:>3}/{:<3} {:>6} {:>8}",
            r.experiment,
            r.method.name(),
            status,
            r.iterations,
            r.terminal_kkt,
            r.newton_steps_accepted,
            r.newton_steps_rejected,
            r.order_estimate.map_or_else(|| "-".into(), |o| format!("{o:.2}")),
            r.support_recall.map_or_else(|| "-".into(), |v| format!("{v:.2}")),
        );
        if let Some(e) = &r.error {
            println!("  error: {e}");
        }
    }
    println!("summary hash {}", outcome.summary_hash());
}

fn cmd_check_tilt(a: &TiltArgs) -> Result<i32> {
    let prob = read_problem(&a.problem)?;
    let x = read_point(&a.point, prob.n)?;
    // A non-stationary candidate is logged by the checker and kept in the report.
    let report = check_tilt_stability(&prob, &x)?;
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(dir) = &a.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("tilt.json"), &text)?;
    }
    Ok(if report.tilt_stable { exit::OK } else { exit::NOT_TILT_STABLE })
}

#[derive(Debug, Deserialize)]
struct TraceRow {
    k: usize,
    objective: f64,
    kkt_residual: f64,
    step_kind: String,
    dist_to_ref: Option<f64>,
    reduced_dim: Option<usize>,
}

/// Aggregate view of one trace CSV.
#[derive(Debug, Serialize)]
pub struct TraceSummary {
    pub records: usize,
    pub last_k: usize,
    pub final_objective: f64,
    pub final_kkt: f64,
    pub step_kinds: BTreeMap<String, usize>,
    /// First `k` from which the reduced dimension stays at its final value.
    pub stable_dim_from: Option<usize>,
    pub final_reduced_dim: Option<usize>,
    pub final_dist_to_ref: Option<f64>,
}

pub fn summarize_trace(path: &Path) -> Result<TraceSummary> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, r) in rd.deserialize::<TraceRow>().enumerate() {
        rows.push(r.map_err(|e| Error::Invalid(format!("{}: row {}: {e}", path.display(), i + 1)))?);
    }
    let last = rows.last().ok_or_else(|| Error::Invalid(format!("{}: empty trace", path.display())))?;
    let mut step_kinds = BTreeMap::new();
    for r in &rows {
        *step_kinds.entry(r.step_kind.clone()).or_insert(0) += 1;
    }
    let with_dim: Vec<(usize, usize)> = rows.iter().filter_map(|r| r.reduced_dim.map(|d| (r.k, d))).collect();
    let final_reduced_dim = with_dim.last().map(|&(_, d)| d);
    let stable_dim_from = final_reduced_dim.and_then(|d| {
        with_dim.iter().rev().take_while(|&&(_, e)| e == d).last().map(|&(k, _)| k)
    });
    Ok(TraceSummary {
        records: rows.len(),
        last_k: last.k,
        final_objective: last.objective,
        final_kkt: last.kkt_residual,
        step_kinds,
        stable_dim_from,
        final_reduced_dim,
        final_dist_to_ref: last.dist_to_ref,
    })
}

fn cmd_inspect(a: &InspectArgs) -> Result<i32> {
    let s = summarize_trace(&a.trace)?;
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s)?);
        return Ok(exit::OK);
    }
    println!("records        {}", s.records);
    println!("last k         {}", s.last_k);
    println!("objective      {:.12e}", s.final_objective);
    println!("kkt            {:.3e}", s.final_kkt);
    for (kind, n) in &s.step_kinds {
        println!("{kind:<14} {n}");
    }
    if let (Some(d), Some(k)) = (s.final_reduced_dim, s.stable_dim_from) {
        println!("reduced dim    {d} since k = {k}");
    }
    if let Some(e) = s.final_dist_to_ref {
        println!("dist to ref    {e:.3e}");
    }
    Ok(exit::OK)
}

fn cmd_gen(a: &GenArgs) -> Result<i32> {
    let specs = suite(&a.suite, a.seed)?;
    fs::create_dir_all(&a.out)?;
    for spec in &specs {
        let g = generate(spec)?;
        let ps = problem_spec(spec, &g)?;
        fs::write(a.out.join(format!("{}.json", spec.id)), serde_json::to_string(&ps)?)?;
        let truth: Vec<f64> = g.truth.iter().cloned().collect();
        fs::write(a.out.join(format!("{}_truth.json", spec.id)), serde_json::to_string(&truth)?)?;
        let x0: Vec<f64> = g.x0.iter().cloned().collect();
        fs::write(a.out.join(format!("{}_x0.json", spec.id)), serde_json::to_string(&x0)?)?;
        println!("{}  n = {}  lambda = {:.6e}  hash {}", spec.id, g.prob.n, g.lambda, g.data_hash);
    }
    Ok(exit::OK)
}
