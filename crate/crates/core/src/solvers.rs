//! Proximal-gradient engines and their effective-subspace Newton variants.

use std::sync::Arc;
use std::time::Instant;

use log::{debug, warn};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::newton::{newton_direction, Fallback, NewtonStepReport};
use crate::problem::{kkt_residual_with_grad, ProblemInstance};
use crate::subspace::SubspaceBasis;

/// Maximum number of shrink steps in one backtracking search.
pub const MAX_SHRINKS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ista,
    Fista,
    NewtonIsta,
    NewtonFista,
}

impl Method {
    pub fn accelerated(self) -> bool {
        matches!(self, Method::Fista | Method::NewtonFista)
    }

    pub fn newton(self) -> bool {
        matches!(self, Method::NewtonIsta | Method::NewtonFista)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Ista => "ista",
            Method::Fista => "fista",
            Method::NewtonIsta => "newton_ista",
            Method::NewtonFista => "newton_fista",
        }
    }

    /// First-order method the Newton variant is built on.
    pub fn base(self) -> Method {
        match self {
            Method::NewtonIsta => Method::Ista,
            Method::NewtonFista => Method::Fista,
            m => m,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.pad(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "ista" => Ok(Method::Ista),
            "fista" => Ok(Method::Fista),
            "newton_ista" => Ok(Method::NewtonIsta),
            "newton_fista" => Ok(Method::NewtonFista),
            _ => Err(Error::Invalid(format!("unknown method `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepMode {
    /// `α = 1/L` from the loss's Lipschitz hint.
    InverseLipschitz,
    Fixed { alpha: f64 },
    Backtracking { alpha0: f64, shrink: f64, growth: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Extrapolation {
    /// `t_k = (1 + √(1 + 4t²_{k−1}))/2`, `β_k = (t_{k−1} − 1)/t_k`.
    OriginalFista,
    /// `β_k = (k − 1)/(k + d)` with `d > 2`.
    ChambolleDossal { d: f64 },
    /// `t_k = (p + √(q + 4t²_{k−1}))/2` with `p ∈ (0, 1]`, `q ∈ [p², (2 − p)²]`.
    LiangLuoTao { p: f64, q: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub method: Method,
    pub step: StepMode,
    pub extrapolation: Extrapolation,
    pub switch_tol: f64,
    pub kkt_tol: f64,
    pub max_iters: usize,
    pub safeguard: bool,
    /// Keep every iterate in the trace (needed for distance-based analysis).
    pub keep_iterates: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::NewtonFista,
            step: StepMode::InverseLipschitz,
            extrapolation: Extrapolation::OriginalFista,
            switch_tol: 1e-3,
            kkt_tol: 1e-8,
            max_iters: 10_000,
            safeguard: true,
            keep_iterates: true,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        match self.step {
            StepMode::Fixed { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                return bad(format!("fixed step must be positive, got {alpha}"))
            }
            StepMode::Backtracking { alpha0, shrink, growth } => {
                if !(alpha0 > 0.0 && alpha0.is_finite()) {
                    return bad(format!("alpha0 must be positive, got {alpha0}"));
                }
                if !(shrink > 0.0 && shrink < 1.0) {
                    return bad(format!("shrink must lie in (0, 1), got {shrink}"));
                }
                if !(growth >= 1.0 && growth.is_finite()) {
                    return bad(format!("growth must be at least 1, got {growth}"));
                }
            }
            _ => {}
        }
        match self.extrapolation {
            Extrapolation::ChambolleDossal { d } if !(d > 2.0) => {
                return bad(format!("Chambolle-Dossal needs d > 2, got {d}"))
            }
            Extrapolation::LiangLuoTao { p, q } => {
                if !(p > 0.0 && p <= 1.0) {
                    return bad(format!("p must lie in (0, 1], got {p}"));
                }
                if !(q >= p * p && q <= (2.0 - p) * (2.0 - p)) {
                    return bad(format!("q must lie in [p², (2-p)²], got {q}"));
                }
            }
            _ => {}
        }
        if !(self.switch_tol >= 0.0) || !(self.kkt_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        Ok(())
    }
}

/// Momentum state for the extrapolated methods.
#[derive(Debug, Clone, Copy)]
pub struct ExtrapolationState {
    pub t: f64,
}

impl Default for ExtrapolationState {
    fn default() -> Self {
        Self { t: 1.0 }
    }
}

/// `β_k` for iteration `k ≥ 1`, advancing `state` for the `t`-sequence rules.
pub fn extrapolation_beta(rule: Extrapolation, k: usize, state: &mut ExtrapolationState) -> f64 {
    match rule {
        Extrapolation::ChambolleDossal { d } => (k as f64 - 1.0) / (k as f64 + d),
        Extrapolation::OriginalFista => advance_t(state, 1.0, 1.0),
        Extrapolation::LiangLuoTao { p, q } => advance_t(state, p, q),
    }
}

fn advance_t(state: &mut ExtrapolationState, p: f64, q: f64) -> f64 {
    let t_prev = state.t;
    let t = 0.5 * (p + (q + 4.0 * t_prev * t_prev).sqrt());
    state.t = t;
    (t_prev - 1.0) / t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Initial,
    ProxOnly,
    Newton,
    NewtonRejected,
}

impl StepKind {
    pub fn name(self) -> &'static str {
        match self {
            StepKind::Initial => "initial",
            StepKind::ProxOnly => "prox_only",
            StepKind::Newton => "newton",
            StepKind::NewtonRejected => "newton_rejected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    MaxIters,
    DomainFailure,
}

/// State after iteration `k` and the step that produced `x_k`.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub k: usize,
    pub x: Option<DVector<f64>>,
    pub objective: f64,
    pub kkt_residual: f64,
    pub step_kind: StepKind,
    /// `‖x_{k−1} − y_{k−1}‖`, the quantity compared against the switch tolerance.
    pub gap: f64,
    pub alpha: f64,
    pub newton: Option<NewtonStepReport>,
    /// Effective subspace used by the Newton attempt, shared with the
    /// previous record when unchanged.
    pub subspace: Option<Arc<SubspaceBasis>>,
    pub wall_ns: u128,
}

impl IterRecord {
    pub fn reduced_dim(&self) -> Option<usize> {
        self.newton.as_ref().map(|r| r.reduced_dim)
    }
}

#[derive(Debug, Clone)]
pub struct SolverTrace {
    pub method: Method,
    pub records: Vec<IterRecord>,
    pub status: Status,
    pub x: DVector<f64>,
}

impl SolverTrace {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.k)
    }

    pub fn final_kkt(&self) -> f64 {
        self.records.last().map_or(f64::INFINITY, |r| r.kkt_residual)
    }

    pub fn final_objective(&self) -> f64 {
        self.records.last().map_or(f64::INFINITY, |r| r.objective)
    }

    pub fn newton_accepted(&self) -> usize {
        self.records.iter().filter(|r| r.step_kind == StepKind::Newton).count()
    }

    pub fn newton_rejected(&self) -> usize {
        self.records.iter().filter(|r| r.step_kind == StepKind::NewtonRejected).count()
    }
}

/// One forward-backward step at `x`: `y = prox_{αg}(x − α∇f(x))` and
/// `z = (x − y)/α − ∇f(x) ∈ ∂g(y)`.
pub fn ista_step(prob: &ProblemInstance, x: &DVector<f64>, alpha: f64) -> Result<(DVector<f64>, DVector<f64>)> {
    let g = prob.loss.gradient(x)?;
    Ok(prox_pair(prob, x, &g, alpha))
}

fn prox_pair(prob: &ProblemInstance, x: &DVector<f64>, grad: &DVector<f64>, alpha: f64) -> (DVector<f64>, DVector<f64>) {
    let y = prob.reg.prox(&(x - grad * alpha), alpha);
    let z = (x - &y) / alpha - grad;
    debug_assert!(
        crate::problem::fenchel_young_check(prob.reg.as_ref(), &y, &z).unwrap_or(false),
        "prox output failed the resolvent check"
    );
    (y, z)
}

/// Largest `α = alpha0·ρ^j` passing the sufficient-decrease test at `x`.
pub fn backtracking_alpha(prob: &ProblemInstance, x: &DVector<f64>, alpha0: f64, rho: f64) -> Result<f64> {
    let (fx, gx) = prob.loss.value_grad(x)?;
    backtrack(prob, x, fx, &gx, alpha0, rho).map(|(a, _)| a)
}

fn backtrack(
    prob: &ProblemInstance,
    x: &DVector<f64>,
    fx: f64,
    gx: &DVector<f64>,
    alpha0: f64,
    rho: f64,
) -> Result<(f64, DVector<f64>)> {
    let mut alpha = alpha0;
    for _ in 0..=MAX_SHRINKS {
        let y = prob.reg.prox(&(x - gx * alpha), alpha);
        if prob.loss.in_domain(&y) {
            if let Ok(fy) = prob.loss.value(&y) {
                let d = &y - x;
                let model = fx + gx.dot(&d) + d.norm_squared() / (2.0 * alpha);
                // rounding slack for nearly stationary points
                if fy <= model + 1e-14 * fx.abs().max(1.0) {
                    return Ok((alpha, y));
                }
            }
        }
        alpha *= rho;
    }
    Err(Error::StepSize(MAX_SHRINKS))
}

fn initial_alpha(prob: &ProblemInstance, step: StepMode) -> Result<f64> {
    match step {
        StepMode::Fixed { alpha } => Ok(alpha),
        StepMode::Backtracking { alpha0, .. } => Ok(alpha0),
        StepMode::InverseLipschitz => match prob.loss.lipschitz_hint() {
            Some(l) if l > 0.0 => Ok(1.0 / l),
            Some(_) => Ok(1.0),
            None => Err(Error::Invalid(
                "inverse-Lipschitz step needs a loss with a Lipschitz constant; use backtracking".into(),
            )),
        },
    }
}

struct Point {
    x: DVector<f64>,
    f: f64,
    g: DVector<f64>,
}

impl Point {
    fn at(prob: &ProblemInstance, x: DVector<f64>) -> Result<Self> {
        let (f, g) = prob.loss.value_grad(&x)?;
        Ok(Self { x, f, g })
    }
}

/// Runs the configured method from `x0`.
pub fn solve(prob: &ProblemInstance, config: &SolverConfig, x0: &DVector<f64>) -> Result<SolverTrace> {
    config.validate()?;
    check_len(prob.n, x0.len())?;
    let start = Instant::now();
    let mut alpha = initial_alpha(prob, config.step)?;
    let mut records = Vec::new();
    let keep = config.keep_iterates;

    let make_record = |k: usize,
                       p: &Point,
                       kkt: f64,
                       kind: StepKind,
                       gap: f64,
                       alpha: f64,
                       newton: Option<NewtonStepReport>,
                       subspace: Option<Arc<SubspaceBasis>>| IterRecord {
        k,
        x: keep.then(|| p.x.clone()),
        objective: (prob.reg.value(&p.x) + p.f).to_f64(),
        kkt_residual: kkt,
        step_kind: kind,
        gap,
        alpha,
        newton,
        subspace,
        wall_ns: start.elapsed().as_nanos(),
    };

    if !prob.loss.in_domain(x0) {
        return Ok(SolverTrace { method: config.method, records, status: Status::DomainFailure, x: x0.clone() });
    }
    let mut cur = Point::at(prob, x0.clone())?;
    let kkt0 = kkt_residual_with_grad(prob, &cur.x, &cur.g, alpha);
    records.push(make_record(0, &cur, kkt0, StepKind::Initial, f64::NAN, alpha, None, None));
    if kkt0 <= config.kkt_tol {
        return Ok(SolverTrace { method: config.method, records, status: Status::Converged, x: cur.x });
    }

    let mut x_prev = cur.x.clone();
    let mut momentum = ExtrapolationState::default();
    let mut momentum_k = 0usize;
    let mut last_subspace: Option<Arc<SubspaceBasis>> = None;
    let mut status = Status::MaxIters;

    for k in 1..=config.max_iters {
        // base point of the forward-backward step
        let base = if config.method.accelerated() {
            momentum_k += 1;
            let beta = extrapolation_beta(config.extrapolation, momentum_k, &mut momentum);
            let u = &cur.x + (&cur.x - &x_prev) * beta;
            if beta == 0.0 {
                None
            } else if prob.loss.in_domain(&u) {
                Some(Point::at(prob, u)?)
            } else {
                debug!("k={k}: extrapolated point left the domain, resetting momentum");
                momentum = ExtrapolationState::default();
                momentum_k = 0;
                None
            }
        } else {
            None
        };
        let base = base.as_ref().unwrap_or(&cur);

        let y = match config.step {
            StepMode::Backtracking { alpha0, shrink, growth } => {
                let start_alpha = (alpha * growth).min(alpha0);
                match backtrack(prob, &base.x, base.f, &base.g, start_alpha, shrink) {
                    Ok((a, y)) => {
                        alpha = a;
                        y
                    }
                    Err(e) => {
                        warn!("k={k}: {e}");
                        status = Status::DomainFailure;
                        break;
                    }
                }
            }
            _ => prob.reg.prox(&(&base.x - &base.g * alpha), alpha),
        };
        let z = (&base.x - &y) / alpha - &base.g;
        debug_assert!(crate::problem::fenchel_young_check(prob.reg.as_ref(), &y, &z).unwrap_or(false));
        let gap = (&cur.x - &y).norm();

        if !prob.loss.in_domain(&y) {
            status = Status::DomainFailure;
            break;
        }
        let y_point = Point::at(prob, y)?;
        let mut next = None;
        let mut kind = StepKind::ProxOnly;
        let mut report = None;
        let mut subspace = None;

        if config.method.newton() && gap <= config.switch_tol {
            kind = StepKind::NewtonRejected;
            match prob.reg.effective_subspace(&z) {
                Ok(l) => {
                    let l = match &last_subspace {
                        Some(prev) if prev.same_as(&l, 1e-12) => prev.clone(),
                        _ => Arc::new(l),
                    };
                    last_subspace = Some(l.clone());
                    let rhs = &z + &y_point.g;
                    let yx = &y_point.x;
                    let rep = newton_direction(|v| prob.loss.hess_vec(yx, v), &rhs, &l)?;
                    if rep.fallback != Fallback::Skipped {
                        let cand = yx - &rep.direction;
                        if prob.loss.in_domain(&cand) {
                            let cp = Point::at(prob, cand)?;
                            let accept = if config.safeguard {
                                let kc = kkt_residual_with_grad(prob, &cp.x, &cp.g, alpha);
                                let ky = kkt_residual_with_grad(prob, yx, &y_point.g, alpha);
                                kc < ky
                            } else {
                                true
                            };
                            if accept {
                                kind = StepKind::Newton;
                                next = Some(cp);
                            }
                        }
                    }
                    report = Some(rep);
                    subspace = Some(l);
                }
                Err(e) => debug!("k={k}: no effective subspace: {e}"),
            }
        }
        let next = next.unwrap_or(y_point);
        x_prev = std::mem::replace(&mut cur, next).x;
        let kkt = kkt_residual_with_grad(prob, &cur.x, &cur.g, alpha);
        records.push(make_record(k, &cur, kkt, kind, gap, alpha, report, subspace));
        if kkt <= config.kkt_tol {
            status = Status::Converged;
            break;
        }
    }
    Ok(SolverTrace { method: config.method, records, status, x: cur.x })
}

/// High-accuracy minimizer by FISTA with backtracking and gradient-based
/// momentum restart, iterated until the KKT residual is at most `tol`.
pub fn reference_solution(prob: &ProblemInstance, tol: f64) -> Result<DVector<f64>> {
    reference_solution_from(prob, tol, &DVector::zeros(prob.n), 1_000_000)
}

pub fn reference_solution_from(
    prob: &ProblemInstance,
    tol: f64,
    x0: &DVector<f64>,
    max_iters: usize,
) -> Result<DVector<f64>> {
    check_len(prob.n, x0.len())?;
    let alpha0 = match prob.loss.lipschitz_hint() {
        Some(l) if l > 0.0 => 1.0 / l,
        _ => 1.0,
    };
    let mut alpha = alpha0;
    let mut cur = Point::at(prob, x0.clone())?;
    if kkt_residual_with_grad(prob, &cur.x, &cur.g, alpha) <= tol {
        return Ok(cur.x);
    }
    let mut x_prev = cur.x.clone();
    let mut t = 1.0f64;
    for _ in 0..max_iters {
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let u = &cur.x + (&cur.x - &x_prev) * beta;
        let base = if beta > 0.0 && prob.loss.in_domain(&u) { Point::at(prob, u)? } else { Point::at(prob, cur.x.clone())? };
        let (a, y) = backtrack(prob, &base.x, base.f, &base.g, alpha, 0.5)?;
        alpha = a;
        // restart when the step opposes the momentum direction
        if (&base.x - &y).dot(&(&y - &cur.x)) > 0.0 {
            t = 1.0;
        } else {
            t = t_next;
        }
        x_prev = std::mem::replace(&mut cur, Point::at(prob, y)?).x;
        if kkt_residual_with_grad(prob, &cur.x, &cur.g, alpha) <= tol {
            return Ok(cur.x);
        }
    }
    Err(Error::NoConvergence(max_iters))
}
