use nalgebra::DVector;

use super::{PolyhedralBase, Scaled, ACT_TOL};
use crate::error::Result;
use crate::ext_real::ExtReal;
use crate::problem::Regularizer;
use crate::subspace::SubspaceBasis;

/// `‖x‖₁`; conjugate is the indicator of the unit `ℓ∞` ball.
#[derive(Debug, Clone, Copy, Default)]
pub struct L1Norm;

/// `sign(v_i)·max(|v_i| − tλ, 0)`.
pub fn l1_prox(v: &DVector<f64>, t: f64, lambda: f64) -> DVector<f64> {
    let thr = t * lambda;
    v.map(|x| x.signum() * (x.abs() - thr).max(0.0))
}

/// `span{e_i : |z_i| ≥ λ(1 − act_tol)}`.
pub fn l1_effective_subspace(z: &DVector<f64>, lambda: f64) -> Result<SubspaceBasis> {
    Scaled::with_scale(L1Norm, lambda).effective_subspace(z)
}

impl PolyhedralBase for L1Norm {
    fn value(&self, x: &DVector<f64>) -> ExtReal {
        ExtReal::Finite(x.lp_norm(1))
    }

    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        l1_prox(v, t, 1.0)
    }

    fn dual_violation(&self, z: &DVector<f64>) -> f64 {
        (z.amax() - 1.0).max(0.0)
    }

    fn subspace(&self, z: &DVector<f64>) -> SubspaceBasis {
        let idx: Vec<usize> = (0..z.len()).filter(|&i| z[i].abs() >= 1.0 - ACT_TOL).collect();
        SubspaceBasis::coordinates(z.len(), &idx)
    }

    fn kind(&self) -> &'static str {
        "l1"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn soft_threshold() {
        assert_eq!(l1_prox(&v(&[2.0, -0.5, 0.0]), 1.0, 1.0), v(&[1.0, 0.0, 0.0]));
        let x = v(&[0.3, -1.0]);
        assert_eq!(l1_prox(&x, 0.0, 1.0), x);
    }

    #[test]
    fn subspace_examples() {
        let b = l1_effective_subspace(&v(&[1.0, 0.2, -1.0]), 1.0).unwrap();
        assert!(b.same_as(&SubspaceBasis::coordinates(3, &[0, 2]), 1e-14));
        assert_eq!(l1_effective_subspace(&v(&[0.0, 0.0]), 1.0).unwrap().rank(), 0);
        assert_eq!(l1_effective_subspace(&v(&[2.0, 2.0, 2.0]), 2.0).unwrap().rank(), 3);
    }

    #[test]
    fn activity_is_monotone() {
        let small = l1_effective_subspace(&v(&[0.5, 1.0, 0.1]), 1.0).unwrap();
        let big = l1_effective_subspace(&v(&[1.0, 1.0, 0.1]), 1.0).unwrap();
        for j in 0..small.rank() {
            assert!(big.contains(&small.basis().column(j).into_owned(), 1e-12));
        }
    }
}
