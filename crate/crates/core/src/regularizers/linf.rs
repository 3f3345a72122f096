use nalgebra::{DMatrix, DVector};

use super::{sign, PolyhedralBase, Scaled, ACT_TOL};
use crate::error::Result;
use crate::ext_real::ExtReal;
use crate::problem::Regularizer;
use crate::subspace::SubspaceBasis;

/// `‖x‖∞`; conjugate is the indicator of the unit `ℓ1` ball.
#[derive(Debug, Clone, Copy, Default)]
pub struct LInfNorm;

/// Euclidean projection onto `{w : ‖w‖₁ ≤ radius}` by sorted thresholding.
pub fn project_l1_ball(v: &DVector<f64>, radius: f64) -> DVector<f64> {
    if v.lp_norm(1) <= radius {
        return v.clone();
    }
    if radius <= 0.0 {
        return DVector::zeros(v.len());
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cum += uj;
        let t = (cum - radius) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        } else {
            break;
        }
    }
    v.map(|x| x.signum() * (x.abs() - theta).max(0.0))
}

/// `v − P_{tλB₁}(v)`.
pub fn linf_prox(v: &DVector<f64>, t: f64, lambda: f64) -> DVector<f64> {
    v - project_l1_ball(v, t * lambda)
}

/// `ℝ^{I(z)} × ℝ·sign(z)` on the boundary of the `λ`-ball, `{0}` in its interior.
pub fn linf_effective_subspace(z: &DVector<f64>, lambda: f64) -> Result<SubspaceBasis> {
    Scaled::with_scale(LInfNorm, lambda).effective_subspace(z)
}

impl PolyhedralBase for LInfNorm {
    fn value(&self, x: &DVector<f64>) -> ExtReal {
        ExtReal::Finite(x.amax())
    }

    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        linf_prox(v, t, 1.0)
    }

    fn dual_violation(&self, z: &DVector<f64>) -> f64 {
        (z.lp_norm(1) - 1.0).max(0.0)
    }

    fn subspace(&self, z: &DVector<f64>) -> SubspaceBasis {
        let n = z.len();
        // The normal cone of an interior point is {0}.
        if z.lp_norm(1) < 1.0 - ACT_TOL {
            return SubspaceBasis::zero(n);
        }
        let zero: Vec<usize> = (0..n).filter(|&i| z[i].abs() <= ACT_TOL).collect();
        let mut cols = DMatrix::zeros(n, zero.len() + 1);
        for (j, &i) in zero.iter().enumerate() {
            cols[(i, j)] = 1.0;
        }
        for i in 0..n {
            if z[i].abs() > ACT_TOL {
                cols[(i, zero.len())] = sign(z[i]);
            }
        }
        SubspaceBasis::from_spanning_set(&cols)
    }

    fn kind(&self) -> &'static str {
        "linf"
    }
}
