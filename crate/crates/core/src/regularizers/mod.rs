//! Polyhedral regularizer families and their effective subspaces.
//!
//! Each family is written once for its unscaled form as a [`PolyhedralBase`];
//! [`Scaled`] applies a multiplicative `λ > 0` through the scale law.

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ext_real::ExtReal;
use crate::problem::Regularizer;
use crate::subspace::SubspaceBasis;

mod composite;
mod l1;
mod linf;
mod nonneg_l1;
mod sorted_l1;
mod tv1d;

pub use composite::{difference_matrix, CompositeReg};
pub use l1::{l1_effective_subspace, l1_prox, L1Norm};
pub use linf::{linf_effective_subspace, linf_prox, project_l1_ball, LInfNorm};
pub use nonneg_l1::{nonneg_l1_effective_subspace, nonneg_l1_prox, NonnegL1Norm};
pub use sorted_l1::{oscar_weights, sorted_l1_effective_subspace, sorted_l1_prox, SortedL1Norm};
pub use tv1d::{tv1d_effective_subspace, tv1d_prox, TV1DNorm};

/// Relative band for the strict inequalities that decide activity.
pub const ACT_TOL: f64 = 1e-8;

/// An unscaled polyhedral function whose conjugate is the indicator of `C`.
pub trait PolyhedralBase: Send + Sync + fmt::Debug {
    fn value(&self, x: &DVector<f64>) -> ExtReal;
    /// `prox_{t·g}(v)`.
    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64>;
    /// Largest constraint violation of `z` against `C`.
    fn dual_violation(&self, z: &DVector<f64>) -> f64;
    /// `par N_C(z)` for `z ∈ C` (within tolerance).
    fn subspace(&self, z: &DVector<f64>) -> SubspaceBasis;
    fn kind(&self) -> &'static str;
}

/// `λ·g` for an unscaled base `g`.
#[derive(Debug, Clone)]
pub struct Scaled<B> {
    pub base: B,
    pub lambda: f64,
}

pub type L1Reg = Scaled<L1Norm>;
pub type LInfReg = Scaled<LInfNorm>;
pub type SortedL1Reg = Scaled<SortedL1Norm>;
pub type TV1DReg = Scaled<TV1DNorm>;
pub type NonnegL1Reg = Scaled<NonnegL1Norm>;

impl<B: PolyhedralBase> Scaled<B> {
    pub fn with_scale(base: B, lambda: f64) -> Self {
        assert!(lambda > 0.0 && lambda.is_finite(), "scale must be positive");
        Self { base, lambda }
    }
}

impl L1Reg {
    pub fn new(lambda: f64) -> Self {
        Self::with_scale(L1Norm, lambda)
    }
}

impl LInfReg {
    pub fn new(lambda: f64) -> Self {
        Self::with_scale(LInfNorm, lambda)
    }
}

impl NonnegL1Reg {
    pub fn new(lambda: f64) -> Self {
        Self::with_scale(NonnegL1Norm, lambda)
    }
}

impl TV1DReg {
    pub fn new(lambda: f64, n: usize) -> Self {
        Self::with_scale(TV1DNorm::new(n), lambda)
    }
}

impl SortedL1Reg {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        Ok(Self::with_scale(SortedL1Norm::new(weights)?, 1.0))
    }

    pub fn oscar(n: usize, w1: f64, w2: f64) -> Result<Self> {
        Self::new(oscar_weights(n, w1, w2))
    }
}

impl<B: PolyhedralBase> Regularizer for Scaled<B> {
    fn value(&self, x: &DVector<f64>) -> ExtReal {
        self.base.value(x) * self.lambda
    }

    fn prox(&self, v: &DVector<f64>, alpha: f64) -> DVector<f64> {
        self.base.prox(v, self.lambda * alpha)
    }

    fn dual_violation(&self, z: &DVector<f64>) -> f64 {
        self.lambda * self.base.dual_violation(&(z / self.lambda))
    }

    fn scale(&self) -> f64 {
        self.lambda
    }

    fn effective_subspace(&self, z: &DVector<f64>) -> Result<SubspaceBasis> {
        if !self.dual_domain_check(z) {
            return Err(Error::DualInfeasible { violation: self.dual_violation(z) });
        }
        Ok(self.base.subspace(&(z / self.lambda)))
    }

    fn kind(&self) -> &'static str {
        self.base.kind()
    }
}

/// `g ≡ 0`. Its conjugate is the indicator of `{0}`.
#[derive(Debug, Clone, Copy)]
pub struct NoReg;

impl Regularizer for NoReg {
    fn value(&self, _x: &DVector<f64>) -> ExtReal {
        ExtReal::ZERO
    }
    fn prox(&self, v: &DVector<f64>, _alpha: f64) -> DVector<f64> {
        v.clone()
    }
    fn dual_violation(&self, z: &DVector<f64>) -> f64 {
        z.amax()
    }
    fn scale(&self) -> f64 {
        0.0
    }
    fn effective_subspace(&self, z: &DVector<f64>) -> Result<SubspaceBasis> {
        if !self.dual_domain_check(z) {
            return Err(Error::DualInfeasible { violation: self.dual_violation(z) });
        }
        Ok(SubspaceBasis::full(z.len()))
    }
    fn kind(&self) -> &'static str {
        "none"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegKind {
    L1,
    Linf,
    Slope,
    Oscar,
    Tv1d,
    NonnegL1,
}

/// JSON description `{kind, lambda, weights?, w1?, w2?}`.
///
/// For `slope` and `oscar`, `lambda` multiplies the weight sequence.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegSpec {
    pub kind: RegKind,
    #[serde(default = "unit")]
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2: Option<f64>,
}

fn unit() -> f64 {
    1.0
}

impl RegSpec {
    pub fn simple(kind: RegKind, lambda: f64) -> Self {
        Self { kind, lambda, weights: None, w1: None, w2: None }
    }
}

pub fn build(spec: &RegSpec, n: usize) -> Result<Arc<dyn Regularizer>> {
    let lambda = spec.lambda;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!("lambda must be positive, got {lambda}")));
    }
    Ok(match spec.kind {
        RegKind::L1 => Arc::new(L1Reg::new(lambda)),
        RegKind::Linf => Arc::new(LInfReg::new(lambda)),
        RegKind::NonnegL1 => Arc::new(NonnegL1Reg::new(lambda)),
        RegKind::Tv1d => {
            if n < 2 {
                return Err(Error::Invalid("tv1d needs n >= 2".into()));
            }
            Arc::new(TV1DReg::new(lambda, n))
        }
        RegKind::Slope => {
            let w = spec
                .weights
                .clone()
                .ok_or_else(|| Error::Invalid("slope needs `weights`".into()))?;
            if w.len() != n {
                return Err(Error::Dimension { expected: n, got: w.len() });
            }
            Arc::new(Scaled::with_scale(SortedL1Norm::new(w)?, lambda))
        }
        RegKind::Oscar => {
            let (w1, w2) = match (spec.w1, spec.w2) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Invalid("oscar needs `w1` and `w2`".into())),
            };
            Arc::new(Scaled::with_scale(SortedL1Norm::new(oscar_weights(n, w1, w2))?, lambda))
        }
    })
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_law_on_l1() {
        let base = L1Reg::new(1.0);
        let r = L1Reg::new(2.5);
        let v = DVector::from_vec(vec![3.0, -0.2, 1.0]);
        assert_eq!(r.value(&v), base.value(&v) * 2.5);
        assert_eq!(r.prox(&v, 0.4), base.prox(&v, 1.0));
        let z = DVector::from_vec(vec![2.5, 1.0, -2.5]);
        let a = r.effective_subspace(&z).unwrap();
        let b = base.effective_subspace(&(&z / 2.5)).unwrap();
        assert!(a.same_as(&b, 1e-12));
    }

    #[test]
    fn infeasible_dual_rejected() {
        let r = L1Reg::new(1.0);
        let z = DVector::from_vec(vec![1.1, 0.0]);
        assert!(matches!(r.effective_subspace(&z), Err(Error::DualInfeasible { .. })));
    }

    #[test]
    fn spec_parsing() {
        let s: RegSpec = serde_json::from_str(r#"{"kind":"oscar","w1":1.0,"w2":0.5}"#).unwrap();
        let r = build(&s, 3).unwrap();
        // weights (2, 1.5, 1)
        let x = DVector::from_vec(vec![1.0, -3.0, 2.0]);
        assert_eq!(r.value(&x), ExtReal::Finite(2.0 * 3.0 + 1.5 * 2.0 + 1.0));
        assert!(serde_json::from_str::<RegSpec>(r#"{"kind":"l1","lam":1}"#).is_err());
        assert!(build(&RegSpec::simple(RegKind::L1, -1.0), 2).is_err());
    }
}
