//! Seeded synthetic instances for the benchmark suites.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::rng::{Purpose, Stream};
use crate::error::{Error, Result};
use crate::losses::{LeastSquaresLoss, PoissonKLLoss};
use crate::problem::{LossSpec, ProblemInstance, ProblemSpec, Regularizer, SmoothLoss};
use crate::regularizers::{L1Reg, RegKind, RegSpec, LInfReg, NonnegL1Reg, SortedL1Reg, TV1DReg};
use crate::solvers::Method;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Toy,
    Lasso,
    Linf,
    Tv1d,
    Oscar,
    PoissonSr,
}

impl ExperimentKind {
    fn stream_id(self) -> u64 {
        match self {
            ExperimentKind::Toy => 0,
            ExperimentKind::Lasso => 1,
            ExperimentKind::Linf => 2,
            ExperimentKind::Tv1d => 3,
            ExperimentKind::Oscar => 4,
            ExperimentKind::PoissonSr => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoissonParams {
    pub side: usize,
    pub factor: usize,
    /// PSF width in high-resolution pixels.
    pub fwhm: f64,
    pub background: f64,
    pub sources: usize,
    pub intensity_min: f64,
    pub intensity_max: f64,
}

impl Default for PoissonParams {
    fn default() -> Self {
        Self { side: 16, factor: 2, fwhm: 5.0, background: 1.0, sources: 6, intensity_min: 20.0, intensity_max: 80.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: String,
    pub kind: ExperimentKind,
    pub m: usize,
    pub n: usize,
    /// Nonzeros of `x*` (Lasso) or size of its maximal set (ℓ∞).
    pub sparsity: usize,
    pub lambda_rule: String,
    pub lambda_c: f64,
    pub noise_var: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub switch_tol: f64,
    pub kkt_tol: f64,
    pub max_iters: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poisson: Option<PoissonParams>,
}

const ALL_METHODS: [Method; 4] = [Method::Ista, Method::Fista, Method::NewtonIsta, Method::NewtonFista];

impl ExperimentSpec {
    fn base(id: &str, kind: ExperimentKind, m: usize, n: usize, seed: u64) -> Self {
        Self {
            id: id.into(),
            kind,
            m,
            n,
            sparsity: 0,
            lambda_rule: "λ = λ_c·‖Aᵀb‖∞".into(),
            lambda_c: 0.1,
            noise_var: 0.001,
            seed,
            methods: ALL_METHODS.to_vec(),
            switch_tol: 1e-3,
            kkt_tol: 1e-8,
            max_iters: 10_000,
            poisson: None,
        }
    }

    pub fn lasso(seed: u64) -> Self {
        Self { sparsity: 8, ..Self::base("lasso", ExperimentKind::Lasso, 48, 128, seed) }
    }

    pub fn linf(seed: u64) -> Self {
        Self { sparsity: 8, ..Self::base("linf", ExperimentKind::Linf, 63, 64, seed) }
    }

    pub fn tv1d(seed: u64) -> Self {
        Self { lambda_c: 0.3, ..Self::base("tv1d", ExperimentKind::Tv1d, 20, 90, seed) }
    }

    pub fn oscar(seed: u64) -> Self {
        Self {
            lambda_rule: "λ₁ = λ_c·‖Aᵀb‖∞, λ₂ = λ₁".into(),
            lambda_c: 1e-6,
            noise_var: 0.01,
            // at 1e-3 and 1e-4 early Newton steps on a near-miss grouping kick
            // the momentum sequence into long excursions
            switch_tol: 1e-5,
            ..Self::base("oscar", ExperimentKind::Oscar, 300, 300, seed)
        }
    }

    /// `f = ½‖x − (2,−1)‖²`, `g = ‖x‖₁`.
    pub fn toy() -> Self {
        Self {
            lambda_rule: "λ = 1".into(),
            lambda_c: 1.0,
            noise_var: 0.0,
            switch_tol: 1e-1,
            kkt_tol: 1e-12,
            ..Self::base("toy_l1_2d", ExperimentKind::Toy, 2, 2, 0)
        }
    }

    pub fn poisson_sr(seed: u64) -> Self {
        let p = PoissonParams::default();
        let low = p.side / p.factor;
        Self {
            lambda_rule: "λ = λ_c·‖max(∇f(0), 0)‖∞".into(),
            lambda_c: 0.5,
            noise_var: 0.0,
            methods: vec![Method::Fista, Method::NewtonFista],
            sparsity: p.sources,
            poisson: Some(p.clone()),
            max_iters: 50_000,
            ..Self::base("poisson_sr", ExperimentKind::PoissonSr, low * low, p.side * p.side, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(format!("experiment `{}`: {m}", self.id)));
        if self.m == 0 || self.n == 0 {
            return bad("dimensions must be positive".into());
        }
        if !(self.lambda_c > 0.0) || !(self.noise_var >= 0.0) {
            return bad("lambda_c must be positive and noise_var nonnegative".into());
        }
        match self.kind {
            ExperimentKind::Toy if (self.m, self.n) != (2, 2) => bad("toy instance is 2×2".into()),
            ExperimentKind::Lasso | ExperimentKind::Linf if self.sparsity == 0 || self.sparsity > self.n => {
                bad(format!("sparsity must lie in 1..={}", self.n))
            }
            ExperimentKind::Tv1d if self.n % 3 != 0 => bad("TV signal needs n divisible by 3".into()),
            ExperimentKind::Oscar if self.n % 20 != 0 => bad("OSCAR block layout needs n divisible by 20".into()),
            ExperimentKind::PoissonSr => {
                let Some(p) = &self.poisson else { return bad("missing poisson parameters".into()) };
                if p.side % p.factor != 0 || p.side * p.side != self.n || (p.side / p.factor).pow(2) != self.m {
                    return bad("inconsistent image dimensions".into());
                }
                if !(p.background > 0.0) || !(p.intensity_min > 0.0 && p.intensity_max >= p.intensity_min) {
                    return bad("background and intensities must be positive".into());
                }
                if p.sources > self.n {
                    return bad("more sources than pixels".into());
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// One generated instance with its ground truth.
#[derive(Debug, Clone)]
pub struct Generated {
    pub prob: ProblemInstance,
    pub truth: DVector<f64>,
    pub x0: DVector<f64>,
    pub lambda: f64,
    /// SHA-256 over the generated data (little-endian `f64` bytes).
    pub data_hash: String,
    /// Observed counts for imaging instances.
    pub counts: Option<DVector<f64>>,
    /// The least-squares loss behind `prob`, when there is one.
    pub ls: Option<Arc<LeastSquaresLoss>>,
}

#[derive(Default)]
struct Hasher(Sha256);

impl Hasher {
    fn put(&mut self, xs: impl IntoIterator<Item = f64>) {
        for x in xs {
            self.0.update(x.to_le_bytes());
        }
    }

    fn finish(self) -> String {
        hex::encode(self.0.finalize())
    }
}

pub fn generate(spec: &ExperimentSpec) -> Result<Generated> {
    spec.validate()?;
    match spec.kind {
        ExperimentKind::Toy => gen_toy(),
        ExperimentKind::Lasso => gen_lasso(spec),
        ExperimentKind::Linf => gen_linf(spec),
        ExperimentKind::Tv1d => gen_tv(spec),
        ExperimentKind::Oscar => gen_oscar(spec),
        ExperimentKind::PoissonSr => gen_poisson_sr(spec),
    }
}

fn stream(spec: &ExperimentSpec, purpose: Purpose) -> Stream {
    Stream::new(spec.seed, spec.kind.stream_id(), purpose)
}

fn gaussian_matrix(spec: &ExperimentSpec) -> DMatrix<f64> {
    let mut s = stream(spec, Purpose::Matrix);
    // row-major draw order
    let vals = s.gaussians(spec.m * spec.n);
    DMatrix::from_row_slice(spec.m, spec.n, &vals)
}

fn observe(spec: &ExperimentSpec, a: &DMatrix<f64>, truth: &DVector<f64>) -> DVector<f64> {
    let mut s = stream(spec, Purpose::Noise);
    let sd = spec.noise_var.sqrt();
    let mut b = a * truth;
    for v in b.iter_mut() {
        *v += sd * s.gaussian();
    }
    b
}

fn least_squares(
    spec: &ExperimentSpec,
    a: DMatrix<f64>,
    truth: DVector<f64>,
    reg: impl FnOnce(f64) -> Result<Arc<dyn Regularizer>>,
) -> Result<Generated> {
    let b = observe(spec, &a, &truth);
    let lambda = spec.lambda_c * (a.transpose() * &b).amax();
    let mut h = Hasher::default();
    h.put(a.iter().cloned());
    h.put(b.iter().cloned());
    h.put([lambda]);
    let loss = Arc::new(LeastSquaresLoss::new(a, b)?);
    let prob = ProblemInstance::new(spec.id.clone(), loss.clone(), reg(lambda)?);
    Ok(Generated { x0: DVector::zeros(spec.n), prob, truth, lambda, data_hash: h.finish(), counts: None, ls: Some(loss) })
}

fn gen_toy() -> Result<Generated> {
    let a = DMatrix::identity(2, 2);
    let b = DVector::from_column_slice(&[2.0, -1.0]);
    let mut h = Hasher::default();
    h.put(a.iter().cloned());
    h.put(b.iter().cloned());
    h.put([1.0]);
    let loss = Arc::new(LeastSquaresLoss::new(a, b)?);
    let prob = ProblemInstance::new("toy_l1_2d", loss.clone(), Arc::new(L1Reg::new(1.0)));
    Ok(Generated {
        prob,
        truth: DVector::from_column_slice(&[1.0, 0.0]),
        x0: DVector::zeros(2),
        lambda: 1.0,
        data_hash: h.finish(),
        counts: None,
        ls: Some(loss),
    })
}

/// Gaussian design, `k`-sparse Gaussian truth, `‖·‖₁`.
pub fn gen_lasso(spec: &ExperimentSpec) -> Result<Generated> {
    let a = gaussian_matrix(spec);
    let mut s = stream(spec, Purpose::Support);
    let support = s.distinct(spec.n, spec.sparsity);
    let mut t = stream(spec, Purpose::Truth);
    let mut truth = DVector::zeros(spec.n);
    for &i in &support {
        truth[i] = t.gaussian();
    }
    least_squares(spec, a, truth, |l| Ok(Arc::new(L1Reg::new(l))))
}

/// Gaussian design, truth with exactly `k` coordinates at `±1` and the rest
/// uniform in `(−0.5, 0.5)`, `‖·‖∞`.
pub fn gen_linf(spec: &ExperimentSpec) -> Result<Generated> {
    let a = gaussian_matrix(spec);
    let mut s = stream(spec, Purpose::Support);
    let support = s.distinct(spec.n, spec.sparsity);
    let mut t = stream(spec, Purpose::Truth);
    let mut truth = DVector::from_fn(spec.n, |_, _| t.uniform_in(-0.5, 0.5));
    for &i in &support {
        truth[i] = t.sign();
    }
    least_squares(spec, a, truth, |l| Ok(Arc::new(LInfReg::new(l))))
}

/// Three equal blocks `(0.5, −0.3, 0.8)`, `λ‖Dx‖₁`.
pub fn gen_tv(spec: &ExperimentSpec) -> Result<Generated> {
    let a = gaussian_matrix(spec);
    let third = spec.n / 3;
    let truth = DVector::from_fn(spec.n, |i, _| match i / third {
        0 => 0.5,
        1 => -0.3,
        _ => 0.8,
    });
    let n = spec.n;
    least_squares(spec, a, truth, move |l| Ok(Arc::new(TV1DReg::new(l, n))))
}

/// `Σ_ij = ρ^{|i−j|}`.
pub fn ar_covariance(n: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| rho.powi(i.abs_diff(j) as i32))
}

/// Symmetric square root of a positive semidefinite matrix.
pub fn symmetric_sqrt(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = s.clone().symmetric_eigen();
    let d = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}

/// Shifts and scales each column to zero mean and unit (population) variance.
pub fn standardize_columns(a: &mut DMatrix<f64>) {
    let m = a.nrows() as f64;
    for mut col in a.column_iter_mut() {
        let mean = col.sum() / m;
        col.add_scalar_mut(-mean);
        let sd = (col.norm_squared() / m).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
}

/// Block coefficients `0 | 3 | 0 | −4 | 0 | 6 | 0` with widths
/// `0.15, 0.05, 0.25, 0.05, 0.20, 0.05, 0.25` of `n`.
pub fn oscar_truth(n: usize) -> DVector<f64> {
    let layout = [(0.15, 0.0), (0.05, 3.0), (0.25, 0.0), (0.05, -4.0), (0.20, 0.0), (0.05, 6.0), (0.25, 0.0)];
    let mut x = Vec::with_capacity(n);
    for (frac, val) in layout {
        let w = (frac * n as f64).round() as usize;
        x.extend(std::iter::repeat_n(val, w));
    }
    x.resize(n, 0.0);
    DVector::from_vec(x)
}

/// Rows drawn from `N(0, Σ)` through the symmetric root of `Σ`, columns
/// standardized, OSCAR weights `w₁ = w₂ = λ₁`.
pub fn gen_oscar(spec: &ExperimentSpec) -> Result<Generated> {
    let root = symmetric_sqrt(&ar_covariance(spec.n, 0.7));
    let mut a = gaussian_matrix(spec) * root;
    standardize_columns(&mut a);
    let truth = oscar_truth(spec.n);
    let n = spec.n;
    least_squares(spec, a, truth, move |l| Ok(Arc::new(SortedL1Reg::oscar(n, l, l)?)))
}

/// Sparse point sources imaged through blur, block-sum and Poisson noise.
pub fn gen_poisson_sr(spec: &ExperimentSpec) -> Result<Generated> {
    let p = spec.poisson.as_ref().ok_or_else(|| Error::Invalid("missing poisson parameters".into()))?;
    let mut s = stream(spec, Purpose::Support);
    let support = s.distinct(spec.n, p.sources);
    let mut t = stream(spec, Purpose::Truth);
    let mut truth = DVector::zeros(spec.n);
    for &i in &support {
        truth[i] = t.uniform_in(p.intensity_min, p.intensity_max);
    }
    let probe = PoissonKLLoss::gaussian(p.side, p.factor, p.fwhm, p.background, &vec![0.0; spec.m])?;
    let mean = probe.model().forward(&truth).add_scalar(p.background);
    let mut c = stream(spec, Purpose::Counts);
    let counts: Vec<f64> = mean.iter().map(|&mu| c.poisson(mu)).collect();
    let loss = PoissonKLLoss::gaussian(p.side, p.factor, p.fwhm, p.background, &counts)?;
    let grad0 = loss.gradient(&DVector::zeros(spec.n))?;
    let lambda = spec.lambda_c * grad0.iter().fold(0.0f64, |acc, &g| acc.max(g));
    if !(lambda > 0.0) {
        return Err(Error::Invalid("penalty rule gave λ = 0; ∇f(0) has no positive entry".into()));
    }
    let counts = DVector::from_vec(counts);
    let x0 = loss.model().adjoint(&counts);
    let mut h = Hasher::default();
    h.put(counts.iter().cloned());
    h.put(truth.iter().cloned());
    h.put([lambda, p.background, p.fwhm]);
    let prob = ProblemInstance::new(spec.id.clone(), Arc::new(loss), Arc::new(NonnegL1Reg::new(lambda)));
    Ok(Generated { prob, truth, x0, lambda, data_hash: h.finish(), counts: Some(counts), ls: None })
}

/// JSON-serializable form of a generated instance, loadable by `ProblemInstance::from_spec`.
pub fn problem_spec(spec: &ExperimentSpec, g: &Generated) -> Result<ProblemSpec> {
    let reg = match spec.kind {
        ExperimentKind::Toy | ExperimentKind::Lasso => RegSpec::simple(RegKind::L1, g.lambda),
        ExperimentKind::Linf => RegSpec::simple(RegKind::Linf, g.lambda),
        ExperimentKind::Tv1d => RegSpec::simple(RegKind::Tv1d, g.lambda),
        ExperimentKind::Oscar => RegSpec { w1: Some(g.lambda), w2: Some(g.lambda), ..RegSpec::simple(RegKind::Oscar, 1.0) },
        ExperimentKind::PoissonSr => RegSpec::simple(RegKind::NonnegL1, g.lambda),
    };
    let loss = match (spec.kind, &g.ls, &spec.poisson, &g.counts) {
        (ExperimentKind::PoissonSr, _, Some(p), Some(c)) => LossSpec::PoissonKl {
            side: p.side,
            factor: p.factor,
            fwhm: p.fwhm,
            background: p.background,
            counts: c.iter().cloned().collect(),
        },
        (_, Some(ls), _, _) => {
            let a = ls.a();
            LossSpec::LeastSquares {
                a: (0..a.nrows()).map(|i| a.row(i).iter().cloned().collect()).collect(),
                b: ls.b().iter().cloned().collect(),
            }
        }
        _ => return Err(Error::Invalid(format!("experiment `{}` has no serializable loss", spec.id))),
    };
    Ok(ProblemSpec { name: spec.id.clone(), n: g.prob.n, loss, reg })
}
