//! Problem definition `φ = f + g` and the oracle contracts shared by every solver.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::ext_real::ExtReal;
use crate::losses::{LeastSquaresLoss, PoissonKLLoss};
use crate::regularizers::{self, RegSpec};
use crate::subspace::SubspaceBasis;

/// Fenchel–Young equality tolerance, relative to `1 + |⟨u, y⟩|`.
pub const FY_TOL: f64 = 1e-8;
/// Dual-domain slack tolerance, relative to `1 + λ`.
pub const DUAL_TOL: f64 = 1e-9;

/// Smooth convex loss `f` with closed-form derivatives.
///
/// Every method returns [`Error::Domain`] outside the (open) domain.
pub trait SmoothLoss: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn value(&self, x: &DVector<f64>) -> Result<f64>;

    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    fn value_grad(&self, x: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        Ok((self.value(x)?, self.gradient(x)?))
    }

    fn hess_vec(&self, x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>>;

    /// Dense Hessian; the default assembles it with `n` Hessian-vector products.
    fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mut h = DMatrix::zeros(n, n);
        let mut e = DVector::zeros(n);
        for j in 0..n {
            e[j] = 1.0;
            h.set_column(j, &self.hess_vec(x, &e)?);
            e[j] = 0.0;
        }
        Ok(h)
    }

    /// Global Lipschitz constant of `∇f`, when one exists and is cheap.
    fn lipschitz_hint(&self) -> Option<f64> {
        None
    }

    fn in_domain(&self, x: &DVector<f64>) -> bool;

    fn kind(&self) -> &'static str;
}

/// Polyhedral regularizer `g` with a support-function conjugate.
///
/// For every family here `g*` is the indicator of a polyhedron `C`, so
/// `g*(u)` is `0` on `C` and `+∞` elsewhere.
pub trait Regularizer: Send + Sync + fmt::Debug {
    fn value(&self, x: &DVector<f64>) -> ExtReal;

    /// `prox_{αg}(v)`.
    fn prox(&self, v: &DVector<f64>, alpha: f64) -> DVector<f64>;

    /// Largest constraint violation of `z` against `dom g*`, in absolute units.
    fn dual_violation(&self, z: &DVector<f64>) -> f64;

    /// Multiplicative scale `λ` applied to the base regularizer.
    fn scale(&self) -> f64;

    /// Basis of `par ∂g*(z)`.
    fn effective_subspace(&self, z: &DVector<f64>) -> Result<SubspaceBasis>;

    fn dual_domain_check(&self, z: &DVector<f64>) -> bool {
        self.dual_violation(z) <= DUAL_TOL * (1.0 + self.scale())
    }

    fn conjugate(&self, u: &DVector<f64>) -> ExtReal {
        if self.dual_domain_check(u) {
            ExtReal::ZERO
        } else {
            ExtReal::PosInf
        }
    }

    /// Euclidean projection onto `dom g*`, via Moreau: `z − prox_g(z)`.
    fn project_dual(&self, z: &DVector<f64>) -> DVector<f64> {
        z - self.prox(z, 1.0)
    }

    fn kind(&self) -> &'static str;
}

/// Serializable description of a smooth loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    /// `½‖Ax − b‖²` with `a` given as row-major rows.
    LeastSquares { a: Vec<Vec<f64>>, b: Vec<f64> },
    /// Poisson KL data term with a Gaussian PSF and block-sum downsampling.
    PoissonKl {
        side: usize,
        factor: usize,
        fwhm: f64,
        background: f64,
        counts: Vec<f64>,
    },
    /// `f ≡ 0`.
    Zero,
}

/// Serializable problem instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub name: String,
    pub n: usize,
    pub loss: LossSpec,
    pub reg: RegSpec,
}

/// `f ≡ 0` on ℝⁿ.
#[derive(Debug, Clone)]
pub struct ZeroLoss {
    pub n: usize,
}

impl SmoothLoss for ZeroLoss {
    fn dim(&self) -> usize {
        self.n
    }
    fn value(&self, x: &DVector<f64>) -> Result<f64> {
        check_len(self.n, x.len())?;
        Ok(0.0)
    }
    fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.n, x.len())?;
        Ok(DVector::zeros(self.n))
    }
    fn hess_vec(&self, _x: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(self.n, v.len())?;
        Ok(DVector::zeros(self.n))
    }
    fn lipschitz_hint(&self) -> Option<f64> {
        Some(0.0)
    }
    fn in_domain(&self, _x: &DVector<f64>) -> bool {
        true
    }
    fn kind(&self) -> &'static str {
        "zero"
    }
}

/// `φ = f + g` on ℝⁿ.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub name: String,
    pub n: usize,
    pub loss: Arc<dyn SmoothLoss>,
    pub reg: Arc<dyn Regularizer>,
}

impl ProblemInstance {
    pub fn new(
        name: impl Into<String>,
        loss: Arc<dyn SmoothLoss>,
        reg: Arc<dyn Regularizer>,
    ) -> Self {
        let n = loss.dim();
        Self { name: name.into(), n, loss, reg }
    }

    pub fn from_spec(spec: &ProblemSpec) -> Result<Self> {
        let reg = regularizers::build(&spec.reg, spec.n)?;
        let loss: Arc<dyn SmoothLoss> = match &spec.loss {
            LossSpec::LeastSquares { a, b } => {
                let m = a.len();
                if b.len() != m {
                    return Err(Error::Dimension { expected: m, got: b.len() });
                }
                for row in a {
                    check_len(spec.n, row.len())?;
                }
                let a = DMatrix::from_fn(m, spec.n, |i, j| a[i][j]);
                Arc::new(LeastSquaresLoss::new(a, DVector::from_vec(b.clone()))?)
            }
            LossSpec::PoissonKl { side, factor, fwhm, background, counts } => {
                let loss = PoissonKLLoss::gaussian(*side, *factor, *fwhm, *background, counts)?;
                check_len(spec.n, loss.dim())?;
                Arc::new(loss)
            }
            LossSpec::Zero => Arc::new(ZeroLoss { n: spec.n }),
        };
        check_len(spec.n, loss.dim())?;
        Ok(Self { name: spec.name.clone(), n: spec.n, loss, reg })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ProblemSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// `|g(y) + g*(u) − ⟨u, y⟩| ≤ 1e-8·(1 + |⟨u, y⟩|)`, i.e. `u ∈ ∂g(y)`.
pub fn fenchel_young_check(reg: &dyn Regularizer, y: &DVector<f64>, u: &DVector<f64>) -> Result<bool> {
    check_len(y.len(), u.len())?;
    if !all_finite(y) || !all_finite(u) {
        return Err(Error::NonFinite("fenchel_young_check"));
    }
    let gy = match reg.value(y) {
        ExtReal::Finite(v) => v,
        ExtReal::PosInf => return Ok(false),
    };
    if !reg.conjugate(u).is_finite() {
        return Ok(false);
    }
    let ip = u.dot(y);
    Ok((gy - ip).abs() <= FY_TOL * (1.0 + ip.abs()))
}

/// `φ(x) = f(x) + g(x)`, `+∞` outside either domain.
pub fn objective(prob: &ProblemInstance, x: &DVector<f64>) -> ExtReal {
    if x.len() != prob.n || !prob.loss.in_domain(x) {
        return ExtReal::PosInf;
    }
    match prob.loss.value(x) {
        Ok(f) => prob.reg.value(x) + f,
        Err(_) => ExtReal::PosInf,
    }
}

/// `‖x − prox_{αg}(x − α∇f(x))‖ / (1 + ‖x‖ + ‖∇f(x)‖)`.
pub fn kkt_residual(prob: &ProblemInstance, x: &DVector<f64>, alpha: f64) -> Result<f64> {
    let g = prob.loss.gradient(x)?;
    Ok(kkt_residual_with_grad(prob, x, &g, alpha))
}

pub(crate) fn kkt_residual_with_grad(
    prob: &ProblemInstance,
    x: &DVector<f64>,
    grad: &DVector<f64>,
    alpha: f64,
) -> f64 {
    let p = prob.reg.prox(&(x - grad * alpha), alpha);
    (x - p).norm() / (1.0 + x.norm() + grad.norm())
}

/// Least-squares residual `‖x − prox_{αg}(x − Aᵀ(Ax−b))‖ / (1 + ‖x‖ + ‖Ax−b‖)`,
/// with the unit gradient step inside the prox argument.
pub fn ls_relative_kkt(loss: &LeastSquaresLoss, reg: &dyn Regularizer, x: &DVector<f64>, alpha: f64) -> f64 {
    let r = loss.residual(x);
    let g = loss.a().transpose() * &r;
    let p = reg.prox(&(x - g), alpha);
    (x - p).norm() / (1.0 + x.norm() + r.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizers::{L1Reg, TV1DReg};

    fn toy() -> ProblemInstance {
        let loss = LeastSquaresLoss::new(DMatrix::identity(2, 2), DVector::from_vec(vec![2.0, -1.0])).unwrap();
        ProblemInstance::new("toy", Arc::new(loss), Arc::new(L1Reg::new(1.0)))
    }

    #[test]
    fn fenchel_young_examples() {
        let l1 = L1Reg::new(1.0);
        let y = DVector::from_vec(vec![1.0, 0.0]);
        assert!(fenchel_young_check(&l1, &y, &DVector::from_vec(vec![1.0, 0.3])).unwrap());
        assert!(!fenchel_young_check(&l1, &y, &DVector::from_vec(vec![0.5, 0.0])).unwrap());
        let tv = TV1DReg::new(1.0, 3);
        let y = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let u = DVector::from_vec(vec![0.0, 1.0, -1.0]);
        assert!(fenchel_young_check(&tv, &y, &u).unwrap());
    }

    #[test]
    fn fenchel_young_rejects_nan() {
        let l1 = L1Reg::new(1.0);
        let y = DVector::from_vec(vec![f64::NAN]);
        assert!(fenchel_young_check(&l1, &y, &y).is_err());
    }

    #[test]
    fn objective_examples() {
        let p = toy();
        assert_eq!(objective(&p, &DVector::from_vec(vec![1.0, 0.0])), ExtReal::Finite(2.0));
        let p0 = ProblemInstance::new("zero", Arc::new(ZeroLoss { n: 2 }), Arc::new(L1Reg::new(2.0)));
        assert_eq!(objective(&p0, &DVector::from_vec(vec![1.0, -1.0])), ExtReal::Finite(4.0));
    }

    #[test]
    fn kkt_examples() {
        let p = toy();
        let x = DVector::from_vec(vec![1.0, 0.0]);
        for alpha in [0.1, 0.5, 1.0] {
            assert!(kkt_residual(&p, &x, alpha).unwrap() < 1e-14);
        }
        let loss = LeastSquaresLoss::new(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let p = ProblemInstance::new("q", Arc::new(loss), Arc::new(crate::regularizers::NoReg));
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!((kkt_residual(&p, &x, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn spec_json_round_trip() {
        let text = r#"{"name":"toy","n":2,
            "loss":{"kind":"least_squares","a":[[1,0],[0,1]],"b":[2,-1]},
            "reg":{"kind":"l1","lambda":1.0}}"#;
        let p = ProblemInstance::from_json(text).unwrap();
        assert_eq!(p.n, 2);
        assert_eq!(objective(&p, &DVector::from_vec(vec![1.0, 0.0])), ExtReal::Finite(2.0));
        let bad = text.replace("\"b\"", "\"bb\"");
        assert!(ProblemInstance::from_json(&bad).is_err());
    }
}
