//! Suite definitions, the parallel runner and its CSV/JSON artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::generators::{generate, ExperimentKind, ExperimentSpec, Generated};
use super::imaging::{support_recall, write_image_csv, write_triptych};
use crate::diagnostics::{convergence_order, identification_report};
use crate::error::{Error, Result};
use crate::problem::ls_relative_kkt;
use crate::solvers::{reference_solution, solve, Method, SolverConfig, SolverTrace, Status, StepMode};

/// Environment variable capping the worker pool.
pub const THREADS_ENV: &str = "POLYNEWT_THREADS";
pub const REFERENCE_TOL: f64 = 1e-12;
pub const SUITES: [&str; 3] = ["paper51", "toy", "poisson"];

/// Recall is measured on sources at least this many times the background.
pub const RECALL_CONTRAST: f64 = 5.0;

pub fn suite(name: &str, seed: u64) -> Result<Vec<ExperimentSpec>> {
    match name {
        "paper51" => Ok(vec![
            ExperimentSpec::lasso(seed),
            ExperimentSpec::linf(seed),
            ExperimentSpec::tv1d(seed),
            ExperimentSpec::oscar(seed),
        ]),
        "toy" => Ok(vec![ExperimentSpec::toy()]),
        "poisson" => Ok(vec![ExperimentSpec::poisson_sr(seed)]),
        _ => Err(Error::Invalid(format!("unknown suite `{name}` (expected one of {})", SUITES.join(", ")))),
    }
}

/// Solver settings used by the runner for one experiment and method.
pub fn solver_config(spec: &ExperimentSpec, method: Method) -> SolverConfig {
    let step = match spec.kind {
        ExperimentKind::PoissonSr => StepMode::Backtracking { alpha0: 1.0, shrink: 0.5, growth: 2.0 },
        _ => StepMode::InverseLipschitz,
    };
    SolverConfig {
        method,
        step,
        switch_tol: spec.switch_tol,
        kkt_tol: spec.kkt_tol,
        max_iters: spec.max_iters,
        ..SolverConfig::default()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub method: Method,
    pub status: Option<Status>,
    pub iterations: usize,
    pub wall_time_ns: u128,
    pub terminal_kkt: f64,
    /// Least-squares residual with `‖Ax − b‖` in the denominator.
    pub terminal_ls_kkt: Option<f64>,
    pub terminal_objective: f64,
    pub dist_to_ref: f64,
    pub newton_steps_accepted: usize,
    pub newton_steps_rejected: usize,
    pub identification_iter: Option<usize>,
    pub order_estimate: Option<f64>,
    pub order_tail_len: usize,
    pub support_recall: Option<f64>,
    pub error: Option<String>,
}

impl ResultRecord {
    pub fn converged(&self) -> bool {
        self.status == Some(Status::Converged)
    }

    fn failed(spec: &ExperimentSpec, method: Method, err: &Error) -> Self {
        Self {
            experiment: spec.id.clone(),
            method,
            status: None,
            iterations: 0,
            wall_time_ns: 0,
            terminal_kkt: f64::NAN,
            terminal_ls_kkt: None,
            terminal_objective: f64::NAN,
            dist_to_ref: f64::NAN,
            newton_steps_accepted: 0,
            newton_steps_rejected: 0,
            identification_iter: None,
            order_estimate: None,
            order_tail_len: 0,
            support_recall: None,
            error: Some(err.to_string()),
        }
    }
}

/// Finished run: its summary row plus the trace it came from.
pub struct RunOutput {
    pub record: ResultRecord,
    pub trace: Option<SolverTrace>,
    pub reference: Option<DVector<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub spec: ExperimentSpec,
    pub data_hash: String,
    pub lambda: f64,
    pub reference_kkt_tol: f64,
    pub reference_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub format_version: u32,
    pub experiments: Vec<ManifestEntry>,
    pub summary_hash: String,
}

pub struct SuiteOutcome {
    pub runs: Vec<RunOutput>,
    pub manifest: Manifest,
}

impl SuiteOutcome {
    pub fn records(&self) -> impl Iterator<Item = &ResultRecord> {
        self.runs.iter().map(|r| &r.record)
    }

    pub fn all_converged(&self) -> bool {
        self.records().all(ResultRecord::converged)
    }

    pub fn summary_hash(&self) -> &str {
        &self.manifest.summary_hash
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Invalid(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| Error::Invalid(e.to_string()))
}

struct Prepared {
    spec: ExperimentSpec,
    generated: Result<Generated>,
    reference: Result<DVector<f64>>,
}

/// Generates every instance, computes its reference solution, runs every
/// configured method and, with `out_dir`, writes traces, summary and manifest.
pub fn run_suite(specs: &[ExperimentSpec], out_dir: Option<&Path>) -> Result<SuiteOutcome> {
    let pool = thread_pool()?;
    let prepared: Vec<Prepared> = pool.install(|| {
        specs
            .par_iter()
            .map(|spec| {
                let generated = generate(spec);
                let reference = match &generated {
                    Ok(g) => reference_solution(&g.prob, REFERENCE_TOL),
                    Err(e) => Err(Error::Invalid(format!("generation failed: {e}"))),
                };
                if let Err(e) = &reference {
                    warn!("{}: reference solution failed: {e}", spec.id);
                }
                Prepared { spec: spec.clone(), generated, reference }
            })
            .collect()
    });

    let jobs: Vec<(usize, Method)> = prepared
        .iter()
        .enumerate()
        .flat_map(|(i, p)| p.spec.methods.iter().map(move |&m| (i, m)))
        .collect();
    let runs: Vec<RunOutput> = pool.install(|| {
        jobs.par_iter().map(|&(i, m)| run_one(&prepared[i], m)).collect()
    });

    let experiments = prepared
        .iter()
        .map(|p| ManifestEntry {
            spec: p.spec.clone(),
            data_hash: p.generated.as_ref().map(|g| g.data_hash.clone()).unwrap_or_default(),
            lambda: p.generated.as_ref().map(|g| g.lambda).unwrap_or(f64::NAN),
            reference_kkt_tol: REFERENCE_TOL,
            reference_error: p.reference.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    let records: Vec<&ResultRecord> = runs.iter().map(|r| &r.record).collect();
    let manifest = Manifest { format_version: 1, experiments, summary_hash: summary_hash(&records) };
    let outcome = SuiteOutcome { runs, manifest };
    if let Some(dir) = out_dir {
        write_outputs(dir, &outcome, &prepared)?;
    }
    Ok(outcome)
}

fn run_one(p: &Prepared, method: Method) -> RunOutput {
    let g = match &p.generated {
        Ok(g) => g,
        Err(e) => return RunOutput { record: ResultRecord::failed(&p.spec, method, e), trace: None, reference: None },
    };
    let cfg = solver_config(&p.spec, method);
    let trace = match solve(&g.prob, &cfg, &g.x0) {
        Ok(t) => t,
        Err(e) => return RunOutput { record: ResultRecord::failed(&p.spec, method, &e), trace: None, reference: None },
    };
    let xref = p.reference.as_ref().ok();
    let last = trace.records.last();
    let (order_estimate, order_tail_len) = match xref.map(|x| convergence_order(&trace, x)) {
        Some(Ok(o)) => (Some(o.order), o.tail_len),
        Some(Err(Error::InsufficientTail(n))) => (None, n),
        _ => (None, 0),
    };
    let identification_iter = xref
        .and_then(|x| identification_report(&trace, &g.prob, x).ok())
        .and_then(|r| r.identified_at);
    let support_recall = match (&p.spec.poisson, p.spec.kind) {
        (Some(pp), ExperimentKind::PoissonSr) => {
            support_recall(&g.truth, &trace.x, pp.side, RECALL_CONTRAST * pp.background, pp.factor)
        }
        _ => None,
    };
    let record = ResultRecord {
        experiment: p.spec.id.clone(),
        method,
        status: Some(trace.status),
        iterations: trace.iterations(),
        wall_time_ns: last.map_or(0, |r| r.wall_ns),
        terminal_kkt: trace.final_kkt(),
        terminal_ls_kkt: g.ls.as_ref().map(|ls| ls_relative_kkt(ls, g.prob.reg.as_ref(), &trace.x, 1.0)),
        terminal_objective: trace.final_objective(),
        dist_to_ref: xref.map_or(f64::NAN, |x| (&trace.x - x).amax()),
        newton_steps_accepted: trace.newton_accepted(),
        newton_steps_rejected: trace.newton_rejected(),
        identification_iter,
        order_estimate,
        order_tail_len,
        support_recall,
        error: None,
    };
    info!(
        "{} {}: {:?} after {} iterations (kkt {:.2e})",
        record.experiment,
        method.name(),
        trace.status,
        record.iterations,
        record.terminal_kkt
    );
    RunOutput { record, trace: Some(trace), reference: xref.cloned() }
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, |v| v.to_string())
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

pub const SUMMARY_HEADER: [&str; 17] = [
    "experiment",
    "method",
    "status",
    "iterations",
    "wall_time_ns",
    "terminal_kkt",
    "terminal_ls_kkt",
    "terminal_objective",
    "dist_to_ref",
    "newton_steps_accepted",
    "newton_steps_rejected",
    "identification_iter",
    "order_estimate",
    "order_tail_len",
    "support_recall",
    "converged",
    "error",
];

fn summary_row(r: &ResultRecord) -> Vec<String> {
    let status = r.status.map_or("error".to_string(), |s| {
        serde_json::to_value(s).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
    });
    vec![
        r.experiment.clone(),
        r.method.name().to_string(),
        status,
        r.iterations.to_string(),
        r.wall_time_ns.to_string(),
        num(r.terminal_kkt),
        r.terminal_ls_kkt.map_or_else(String::new, num),
        num(r.terminal_objective),
        num(r.dist_to_ref),
        r.newton_steps_accepted.to_string(),
        r.newton_steps_rejected.to_string(),
        opt(&r.identification_iter),
        r.order_estimate.map_or_else(String::new, num),
        r.order_tail_len.to_string(),
        r.support_recall.map_or_else(String::new, num),
        r.converged().to_string(),
        opt(&r.error),
    ]
}

/// Summary table as CSV text; `with_wall_time = false` drops the timing column.
pub fn summary_csv(records: &[&ResultRecord], with_wall_time: bool) -> Result<String> {
    let keep = |i: usize| with_wall_time || SUMMARY_HEADER[i] != "wall_time_ns";
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, h)| *h))?;
    for r in records {
        let row = summary_row(r);
        w.write_record(row.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, v)| v))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
}

/// SHA-256 of the summary table without wall-time columns.
pub fn summary_hash(records: &[&ResultRecord]) -> String {
    let text = summary_csv(records, false).expect("in-memory CSV");
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Per-iteration trace as CSV text.
pub fn trace_csv(trace: &SolverTrace, x_ref: Option<&DVector<f64>>) -> String {
    let mut s = String::from("k,objective,kkt_residual,step_kind,dist_to_ref,alpha,reduced_dim,wall_ns\n");
    for r in &trace.records {
        let dist = match (x_ref, &r.x) {
            (Some(xr), Some(x)) => num((x - xr).norm()),
            _ => String::new(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.k,
            num(r.objective),
            num(r.kkt_residual),
            r.step_kind.name(),
            dist,
            num(r.alpha),
            opt(&r.reduced_dim()),
            r.wall_ns
        );
    }
    s
}

fn run_stem(r: &ResultRecord) -> String {
    format!("{}_{}", r.experiment, r.method.name())
}

fn write_outputs(dir: &Path, outcome: &SuiteOutcome, prepared: &[Prepared]) -> Result<()> {
    let traces = dir.join("traces");
    fs::create_dir_all(&traces)?;
    for run in &outcome.runs {
        if let Some(t) = &run.trace {
            let path: PathBuf = traces.join(format!("{}.csv", run_stem(&run.record)));
            fs::write(path, trace_csv(t, run.reference.as_ref()))?;
        }
    }
    let records: Vec<&ResultRecord> = outcome.records().collect();
    fs::write(dir.join("summary.csv"), summary_csv(&records, true)?)?;
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&outcome.manifest)?)?;

    for run in &outcome.runs {
        let (Some(trace), Some(p)) = (&run.trace, prepared.iter().find(|p| p.spec.id == run.record.experiment)) else {
            continue;
        };
        let (Some(pp), Ok(g)) = (&p.spec.poisson, &p.generated) else { continue };
        let Some(counts) = &g.counts else { continue };
        let stem = run_stem(&run.record);
        write_triptych(&dir.join(format!("{stem}_triptych.png")), pp.side, pp.factor, &g.truth, counts, &trace.x)?;
        write_image_csv(&dir.join(format!("{stem}_reconstruction.csv")), &trace.x, pp.side)?;
        write_image_csv(&dir.join(format!("{}_truth.csv", p.spec.id)), &g.truth, pp.side)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_suite_is_empty() {
        let out = run_suite(&[], None).unwrap();
        assert!(out.all_converged());
        assert_eq!(out.runs.len(), 0);
    }

    #[test]
    fn unknown_suite_rejected() {
        assert!(suite("nope", 1).is_err());
    }

    #[test]
    fn toy_suite_hits_the_minimizer() {
        let out = run_suite(&suite("toy", 0).unwrap(), None).unwrap();
        assert!(out.all_converged());
        for r in out.records() {
            assert!(r.dist_to_ref <= 1e-10, "{r:?}");
        }
    }
}
