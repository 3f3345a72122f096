use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ext_real::ExtReal;
use crate::problem::Regularizer;
use crate::subspace::SubspaceBasis;

/// `(n−1)×n` first-difference matrix with rows `e_i − e_{i+1}`.
pub fn difference_matrix(n: usize) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(n - 1, n);
    for i in 0..n - 1 {
        d[(i, i)] = 1.0;
        d[(i, i + 1)] = -1.0;
    }
    d
}

/// `g = h ∘ K` for a polyhedral `h` and a linear map `K` (m×n).
///
/// The conjugate is `g*(z) = min{h*(y) : Kᵀy = z}`. Dual points are lifted
/// to `y` by least squares unless the caller supplies a minimizing `y`;
/// the minimum-norm lift is the right one whenever `Kᵀ` is injective.
#[derive(Debug, Clone)]
pub struct CompositeReg {
    k: DMatrix<f64>,
    inner: Arc<dyn Regularizer>,
    kt_pinv: DMatrix<f64>,
    k_pinv: DMatrix<f64>,
    kernel: SubspaceBasis,
    range: SubspaceBasis,
    step: f64,
}

const SVD_TOL: f64 = 1e-12;
const PROX_ITERS: usize = 20_000;

impl CompositeReg {
    pub fn new(k: DMatrix<f64>, inner: Arc<dyn Regularizer>) -> Result<Self> {
        let (m, n) = k.shape();
        if m == 0 || n == 0 {
            return Err(Error::Invalid("composite map must be nonempty".into()));
        }
        let svd = k.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let cut = SVD_TOL * smax.max(1.0);
        let u = svd.u.as_ref().expect("requested");
        let vt = svd.v_t.as_ref().expect("requested");
        let rank = svd.singular_values.iter().filter(|&&s| s > cut).count();
        let range = SubspaceBasis::from_spanning_set(&u.columns(0, rank).into_owned());
        // kernel: orthogonal complement of the row space
        let row = vt.rows(0, rank).transpose();
        let kernel = SubspaceBasis::from_spanning_set(&(DMatrix::identity(n, n) - &row * row.transpose()));
        let k_pinv = svd.pseudo_inverse(cut).map_err(|e| Error::Invalid(e.to_string()))?;
        let kt_pinv = k_pinv.transpose();
        Ok(Self { k, inner, kt_pinv, k_pinv, kernel, range, step: 1.0 / (smax * smax) })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn kernel(&self) -> &SubspaceBasis {
        &self.kernel
    }

    fn lift(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.kt_pinv * z
    }

    fn violation_at(&self, z: &DVector<f64>, y: &DVector<f64>) -> f64 {
        let eq = (self.k.transpose() * y - z).amax();
        eq.max(self.inner.dual_violation(y))
    }

    /// `K⁻¹(par ∂h*(y) ∩ Im K)` with an explicit dual certificate `y`
    /// (`Kᵀy = z`, `y ∈ dom h*`).
    pub fn effective_subspace_with(&self, z: &DVector<f64>, y: Option<&DVector<f64>>) -> Result<SubspaceBasis> {
        let y = match y {
            Some(y) => y.clone(),
            None => self.lift(z),
        };
        let viol = self.violation_at(z, &y);
        if viol > crate::problem::DUAL_TOL * (1.0 + self.scale()) {
            return Err(Error::DualInfeasible { violation: viol });
        }
        let inner = self.inner.effective_subspace(&y)?;
        let s = inner.intersection(&self.range, 1e-10);
        let n = self.k.ncols();
        let mut cols = DMatrix::zeros(n, self.kernel.rank() + s.rank());
        cols.columns_mut(0, self.kernel.rank()).copy_from(self.kernel.basis());
        if s.rank() > 0 {
            let lifted = &self.k_pinv * s.basis();
            cols.columns_mut(self.kernel.rank(), s.rank()).copy_from(&lifted);
        }
        Ok(SubspaceBasis::from_spanning_set(&cols))
    }

    /// Minimizes the dual objective exactly over the face of `α·dom h*`
    /// containing `w`; `None` unless that stays feasible and improves.
    fn polish(&self, v: &DVector<f64>, alpha: f64, w: &DVector<f64>) -> Option<DVector<f64>> {
        let m = self.k.nrows();
        let normals = self.inner.effective_subspace(&(w / alpha)).ok()?;
        let tangent = SubspaceBasis::from_spanning_set(&(DMatrix::identity(m, m) - normals.projector()));
        if tangent.rank() == 0 {
            return None;
        }
        let b = tangent.basis();
        let ktb = self.k.transpose() * b;
        let rhs = ktb.transpose() * (v - self.k.transpose() * w);
        let c = (ktb.transpose() * &ktb).svd(true, true).solve(&rhs, SVD_TOL).ok()?;
        let cand = w + b * c;
        let dual = |w: &DVector<f64>| (v - self.k.transpose() * w).norm_squared();
        let feasible = self.inner.dual_violation(&(&cand / alpha)) <= 1e-13 * (1.0 + self.scale());
        (feasible && dual(&cand) <= dual(w)).then_some(cand)
    }
}

impl Regularizer for CompositeReg {
    fn value(&self, x: &DVector<f64>) -> ExtReal {
        self.inner.value(&(&self.k * x))
    }

    /// Solved through the dual `min ½‖v − Kᵀw‖²` over `w ∈ α·dom h*` by
    /// accelerated projected gradient with adaptive restart, then polished by
    /// an exact solve on the identified face.
    fn prox(&self, v: &DVector<f64>, alpha: f64) -> DVector<f64> {
        let kt = self.k.transpose();
        let project = |w: &DVector<f64>| w - self.inner.prox(w, alpha);
        let grad = |w: &DVector<f64>| &self.k * (&kt * w - v);
        let mut w = DVector::zeros(self.k.nrows());
        let mut u = w.clone();
        let mut t = 1.0f64;
        for _ in 0..PROX_ITERS {
            let w_next = project(&(&u - grad(&u) * self.step));
            // restart when the momentum direction opposes the step
            if (&u - &w_next).dot(&(&w_next - &w)) > 0.0 {
                t = 1.0;
            }
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            u = &w_next + (&w_next - &w) * ((t - 1.0) / t_next);
            w = w_next;
            t = t_next;
            let fixed = (&w - project(&(&w - grad(&w) * self.step))).amax();
            if fixed <= 1e-14 * (1.0 + w.amax()) {
                break;
            }
        }
        if let Some(p) = self.polish(v, alpha, &w) {
            w = p;
        }
        v - kt * w
    }

    fn dual_violation(&self, z: &DVector<f64>) -> f64 {
        self.violation_at(z, &self.lift(z))
    }

    fn scale(&self) -> f64 {
        self.inner.scale()
    }

    fn effective_subspace(&self, z: &DVector<f64>) -> Result<SubspaceBasis> {
        self.effective_subspace_with(z, None)
    }

    fn kind(&self) -> &'static str {
        "composite"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizers::{L1Reg, TV1DReg};

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn difference_composite_matches_tv() {
        let n = 4;
        let comp = CompositeReg::new(difference_matrix(n), Arc::new(L1Reg::new(1.0))).unwrap();
        let tv = TV1DReg::new(1.0, n);
        for z in [v(&[1.0, 0.0, -1.0, 0.0]), v(&[0.0; 4]), v(&[0.5, 0.5, -1.0, 0.0]), v(&[-1.0, 2.0, -1.0, 0.0])] {
            let a = comp.effective_subspace(&z).unwrap();
            let b = tv.effective_subspace(&z).unwrap();
            assert!(a.same_as(&b, 1e-9), "z = {z}");
        }
        let x = v(&[1.0, 3.0, -2.0, 0.5]);
        assert!((comp.prox(&x, 0.7) - tv.prox(&x, 0.7)).amax() < 1e-9);
    }

    #[test]
    fn identity_reduces_to_inner() {
        let inner = Arc::new(L1Reg::new(2.0));
        let comp = CompositeReg::new(DMatrix::identity(3, 3), inner.clone()).unwrap();
        let z = v(&[2.0, -0.5, -2.0]);
        assert!(comp
            .effective_subspace(&z)
            .unwrap()
            .same_as(&inner.effective_subspace(&z).unwrap(), 1e-12));
    }

    #[test]
    fn kernel_is_always_contained() {
        let k = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let comp = CompositeReg::new(k, Arc::new(L1Reg::new(1.0))).unwrap();
        let b = comp.effective_subspace(&v(&[0.0, 0.0, 0.0])).unwrap();
        assert!(b.contains(&v(&[1.0, -1.0, 0.0]), 1e-12));
        assert_eq!(b.rank(), 1);
    }

    #[test]
    fn infeasible_dual_rejected() {
        let comp = CompositeReg::new(difference_matrix(3), Arc::new(L1Reg::new(1.0))).unwrap();
        assert!(comp.effective_subspace(&v(&[1.0, 0.0, 0.0])).is_err());
    }
}
