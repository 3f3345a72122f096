//! Smooth data-fidelity terms: least squares and Poisson Kullback–Leibler.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::problem::SmoothLoss;

/// Largest eigenvalue of `AᵀA` by power iteration, to `tol` relative change.
pub fn power_iteration_lipschitz(a: &DMatrix<f64>, tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // deterministic, generic start vector
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618_033_988_75).fract());
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..10_000 {
        let w = a.transpose() * (a * &v);
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        if (next - est).abs() <= tol * next {
            return next;
        }
        est = next;
    }
    est
}

/// `½‖Ax − b‖²`.
#[derive(Debug, Clone)]
pub struct LeastSquaresLoss {
    a: DMatrix<f64>,
    b: DVector<f64>,
    ata: DMatrix<f64>,
    atb: DVector<f64>,
    lipschitz: f64,
}

impl LeastSquaresLoss {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        check_len(a.nrows(), b.len())?;
        if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("least-squares data"));
        }
        let ata = a.transpose() * &a;
        let atb = a.transpose() * &b;
        let lipschitz = power_iteration_lipschitz(&a, 1e-10);
        Ok(Self { a, b, ata, atb, lipschitz })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn atb(&self) -> &DVector<f64> {
        &self.atb
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x - &self.b
    }
}

/// `Aᵀ(Ax − b)`.
pub fn ls_gradient(loss: &LeastSquaresLoss, x: &DVector<f64>) -> Result<DVector<f64>> {
    loss.gradient(x)
}

impl SmoothLoss for LeastSquaresLoss {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        check_len(self.dim(), x.len())?;
        Ok(0.5 * self.residual(x).norm_squared())
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dim(), x.len())?;
        Ok(self.a.transpose() * self.residual(x))
    }

    fn value_grad(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        check_len(self.dim(), x.len())?;
        let r = self.residual(x);
        Ok((0.5 * r.norm_squared(), self.a.transpose() * r))
    }

    fn hess_vec(&self, _x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dim(), v.len())?;
        Ok(&self.ata * v)
    }

    fn hessian(&self, _x: &DVector<f64>) -> Result<DMatrix<f64>> {
        Ok(self.ata.clone())
    }

    fn lipschitz_hint(&self) -> Option<f64> {
        Some(self.lipschitz)
    }

    fn in_domain(&self, x: &DVector<f64>) -> bool {
        x.len() == self.dim()
    }

    fn kind(&self) -> &'static str {
        "least_squares"
    }
}

/// Gaussian blur `H` on a `side×side` image followed by `q×q` block-sum `M`.
///
/// The blur is separable with half-sample symmetric reflection at the
/// borders, which makes `H` symmetric with unit row and column sums.
#[derive(Debug, Clone)]
pub struct ForwardModel {
    side: usize,
    q: usize,
    h1: DMatrix<f64>,
}

/// Reflect an index into `0..n` (pattern `… c b a | a b c … | c b a …`).
fn reflect(p: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let r = p.rem_euclid(period) as usize;
    if r < n {
        r
    } else {
        2 * n - 1 - r
    }
}

/// Builds the operators for a `side×side` truth, downsampling factor `q` and a
/// PSF with full width at half maximum `fwhm` in high-resolution pixels.
pub fn build_forward_model(side: usize, q: usize, fwhm: f64) -> Result<ForwardModel> {
    if side == 0 || q == 0 || side % q != 0 {
        return Err(Error::Invalid(format!("factor {q} must divide side {side}")));
    }
    if !(fwhm >= 0.0 && fwhm.is_finite()) {
        return Err(Error::Invalid(format!("fwhm must be nonnegative, got {fwhm}")));
    }
    let sigma = fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let mut h1 = DMatrix::zeros(side, side);
    if sigma < 1e-6 {
        h1.fill_with_identity();
    } else {
        let radius = (4.0 * sigma).ceil() as isize;
        let taps: Vec<f64> = (-radius..=radius)
            .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = taps.iter().sum();
        for i in 0..side {
            for (k, t) in (-radius..=radius).enumerate() {
                let j = reflect(i as isize + t, side);
                h1[(i, j)] += taps[k] / total;
            }
        }
    }
    Ok(ForwardModel { side, q, h1 })
}

impl ForwardModel {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn factor(&self) -> usize {
        self.q
    }

    pub fn n(&self) -> usize {
        self.side * self.side
    }

    pub fn m(&self) -> usize {
        let s = self.side / self.q;
        s * s
    }

    pub fn low_side(&self) -> usize {
        self.side / self.q
    }

    fn as_image(&self, x: &DVector<f64>) -> DMatrix<f64> {
        // row-major pixel order: x[r·side + c]
        DMatrix::from_row_slice(self.side, self.side, x.as_slice())
    }

    fn flatten(img: &DMatrix<f64>) -> DVector<f64> {
        DVector::from_iterator(img.len(), img.transpose().iter().cloned())
    }

    pub fn apply_h(&self, x: &DVector<f64>) -> DVector<f64> {
        let img = self.as_image(x);
        Self::flatten(&(&self.h1 * img * self.h1.transpose()))
    }

    pub fn apply_ht(&self, x: &DVector<f64>) -> DVector<f64> {
        let img = self.as_image(x);
        Self::flatten(&(self.h1.transpose() * img * &self.h1))
    }

    pub fn apply_m(&self, x: &DVector<f64>) -> DVector<f64> {
        let ls = self.low_side();
        let mut out = DVector::zeros(ls * ls);
        for r in 0..self.side {
            for c in 0..self.side {
                out[(r / self.q) * ls + c / self.q] += x[r * self.side + c];
            }
        }
        out
    }

    pub fn apply_mt(&self, y: &DVector<f64>) -> DVector<f64> {
        let ls = self.low_side();
        DVector::from_fn(self.n(), |i, _| {
            let (r, c) = (i / self.side, i % self.side);
            y[(r / self.q) * ls + c / self.q]
        })
    }

    /// `MHx`.
    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply_m(&self.apply_h(x))
    }

    /// `HᵀMᵀy`.
    pub fn adjoint(&self, y: &DVector<f64>) -> DVector<f64> {
        self.apply_ht(&self.apply_mt(y))
    }

    pub fn dense_h(&self) -> DMatrix<f64> {
        self.dense_of(|v| self.apply_h(v), self.n(), self.n())
    }

    pub fn dense_m(&self) -> DMatrix<f64> {
        self.dense_of(|v| self.apply_m(v), self.m(), self.n())
    }

    fn dense_of(&self, f: impl Fn(&DVector<f64>) -> DVector<f64>, rows: usize, cols: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rows, cols);
        let mut e = DVector::zeros(cols);
        for j in 0..cols {
            e[j] = 1.0;
            out.set_column(j, &f(&e));
            e[j] = 0.0;
        }
        out
    }
}

/// Feasibility margin on the predicted intensities `MHx + b`.
pub const KL_MARGIN: f64 = 1e-12;

/// `Σ y_i log(y_i/μ_i) − y_i + μ_i` with `μ = MHx + b`.
#[derive(Debug, Clone)]
pub struct PoissonKLLoss {
    model: ForwardModel,
    background: DVector<f64>,
    counts: DVector<f64>,
}

impl PoissonKLLoss {
    pub fn new(model: ForwardModel, background: DVector<f64>, counts: DVector<f64>) -> Result<Self> {
        check_len(model.m(), background.len())?;
        check_len(model.m(), counts.len())?;
        if background.iter().any(|&b| !(b > 0.0) || !b.is_finite()) {
            return Err(Error::Invalid("background must be positive".into()));
        }
        if counts.iter().any(|&y| !(y >= 0.0) || !y.is_finite()) {
            return Err(Error::Invalid("counts must be nonnegative".into()));
        }
        Ok(Self { model, background, counts })
    }

    /// Gaussian PSF (`fwhm` in high-resolution pixels) with constant background.
    pub fn gaussian(side: usize, q: usize, fwhm: f64, background: f64, counts: &[f64]) -> Result<Self> {
        let model = build_forward_model(side, q, fwhm)?;
        let m = model.m();
        Self::new(model, DVector::from_element(m, background), DVector::from_column_slice(counts))
    }

    pub fn model(&self) -> &ForwardModel {
        &self.model
    }

    pub fn counts(&self) -> &DVector<f64> {
        &self.counts
    }

    pub fn background(&self) -> &DVector<f64> {
        &self.background
    }

    fn intensity(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.model.n(), x.len())?;
        let mu = self.model.forward(x) + &self.background;
        if mu.iter().all(|&v| v > KL_MARGIN) {
            Ok(mu)
        } else {
            Err(Error::Domain)
        }
    }
}

/// KL value and gradient `HᵀMᵀ(1 − y/μ)`.
pub fn kl_value_grad(loss: &PoissonKLLoss, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    loss.value_grad(x)
}

/// `HᵀMᵀ((y/μ²) ⊙ MHv)`.
pub fn kl_hessian_vec(loss: &PoissonKLLoss, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
    loss.hess_vec(x, v)
}

impl SmoothLoss for PoissonKLLoss {
    fn dim(&self) -> usize {
        self.model.n()
    }

    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        let mu = self.intensity(x)?;
        Ok(mu
            .iter()
            .zip(self.counts.iter())
            .map(|(&m, &y)| if y > 0.0 { y * (y / m).ln() - y + m } else { m })
            .sum())
    }

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mu = self.intensity(x)?;
        let r = DVector::from_fn(mu.len(), |i, _| 1.0 - self.counts[i] / mu[i]);
        Ok(self.model.adjoint(&r))
    }

    fn value_grad(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        let mu = self.intensity(x)?;
        let mut val = 0.0;
        let mut r = DVector::zeros(mu.len());
        for i in 0..mu.len() {
            let (m, y) = (mu[i], self.counts[i]);
            val += if y > 0.0 { y * (y / m).ln() - y + m } else { m };
            r[i] = 1.0 - y / m;
        }
        Ok((val, self.model.adjoint(&r)))
    }

    fn hess_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.dim(), v.len())?;
        let mu = self.intensity(x)?;
        let mv = self.model.forward(v);
        let w = DVector::from_fn(mu.len(), |i, _| self.counts[i] / (mu[i] * mu[i]) * mv[i]);
        Ok(self.model.adjoint(&w))
    }

    fn in_domain(&self, x: &DVector<f64>) -> bool {
        self.intensity(x).is_ok()
    }

    fn kind(&self) -> &'static str {
        "poisson_kl"
    }
}
