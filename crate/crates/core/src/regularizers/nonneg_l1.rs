use nalgebra::DVector;

use super::{PolyhedralBase, Scaled, ACT_TOL};
use crate::error::Result;
use crate::ext_real::ExtReal;
use crate::problem::Regularizer;
use crate::subspace::SubspaceBasis;

/// `Σ x_i + δ_{x ≥ 0}`; conjugate is the indicator of `(−∞, 1]ⁿ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NonnegL1Norm;

/// `max(0, v_i − tλ)`.
pub fn nonneg_l1_prox(v: &DVector<f64>, t: f64, lambda: f64) -> DVector<f64> {
    let thr = t * lambda;
    v.map(|x| (x - thr).max(0.0))
}

/// `span{e_i : z_i ≥ λ(1 − act_tol)}`.
pub fn nonneg_l1_effective_subspace(z: &DVector<f64>, lambda: f64) -> Result<SubspaceBasis> {
    Scaled::with_scale(NonnegL1Norm, lambda).effective_subspace(z)
}

impl PolyhedralBase for NonnegL1Norm {
    fn value(&self, x: &DVector<f64>) -> ExtReal {
        if x.iter().any(|&v| v < 0.0) {
            ExtReal::PosInf
        } else {
            ExtReal::Finite(x.sum())
        }
    }

    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        nonneg_l1_prox(v, t, 1.0)
    }

    fn dual_violation(&self, z: &DVector<f64>) -> f64 {
        (z.max() - 1.0).max(0.0)
    }

    fn subspace(&self, z: &DVector<f64>) -> SubspaceBasis {
        let idx: Vec<usize> = (0..z.len()).filter(|&i| z[i] >= 1.0 - ACT_TOL).collect();
        SubspaceBasis::coordinates(z.len(), &idx)
    }

    fn kind(&self) -> &'static str {
        "nonneg_l1"
    }
}
