//! Newton step restricted to an effective subspace.
//!
//! Solves `min_{d ∈ L} ½⟨Hd, d⟩ − ⟨rhs, d⟩` through the reduced system
//! `BᵀHB c = Bᵀrhs`, `d = Bc`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::subspace::SubspaceBasis;

/// Relative eigenvalue floor below which the reduced Hessian is singular.
pub const SINGULAR_TOL: f64 = 1e-12;
/// Tikhonov shift as a fraction of the mean reduced eigenvalue.
pub const TIKHONOV: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fallback {
    None,
    Tikhonov,
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct NewtonStepReport {
    #[serde(skip)]
    pub direction: DVector<f64>,
    pub reduced_dim: usize,
    /// `λ_max/λ_min` of the reduced Hessian; `+∞` when singular.
    pub reduced_condition: f64,
    /// `‖Bᵀ(rhs − Hd)‖`.
    pub residual_in_lperp: f64,
    pub fallback: Fallback,
}

/// Solves the subspace Newton problem with Hessian action `hess`.
pub fn newton_direction<F>(hess: F, rhs: &DVector<f64>, basis: &SubspaceBasis) -> Result<NewtonStepReport>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = rhs.len();
    check_len(n, basis.ambient_dim())?;
    let r = basis.rank();
    if r == 0 {
        return Ok(NewtonStepReport {
            direction: DVector::zeros(n),
            reduced_dim: 0,
            reduced_condition: 1.0,
            residual_in_lperp: 0.0,
            fallback: Fallback::None,
        });
    }
    let b = basis.basis();
    let mut hb = DMatrix::zeros(n, r);
    for j in 0..r {
        let col = hess(&b.column(j).into_owned())?;
        check_len(n, col.len())?;
        hb.set_column(j, &col);
    }
    let mut hr = b.transpose() * &hb;
    let asym = (&hr - hr.transpose()).amax();
    if asym > SYMMETRY_TOL * (1.0 + hr.amax()) {
        return Err(Error::NonSymmetric(asym));
    }
    hr = (&hr + hr.transpose()) * 0.5;
    let gr = b.transpose() * rhs;

    let eig = hr.clone().symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    let regular = lmax > 0.0 && lmin >= SINGULAR_TOL * lmax;

    let mut fallback = Fallback::None;
    let mut coeffs = None;
    if regular {
        coeffs = hr.clone().cholesky().map(|c| c.solve(&gr));
    }
    if coeffs.is_none() {
        let trace = hr.trace();
        if trace > 0.0 {
            let mu = TIKHONOV * trace / r as f64;
            let shifted = &hr + DMatrix::identity(r, r) * mu;
            coeffs = shifted.cholesky().map(|c| c.solve(&gr));
            fallback = Fallback::Tikhonov;
        }
    }
    let c = match coeffs {
        Some(c) if c.iter().all(|v| v.is_finite()) => c,
        _ => {
            return Ok(NewtonStepReport {
                direction: DVector::zeros(n),
                reduced_dim: r,
                reduced_condition: f64::INFINITY,
                residual_in_lperp: gr.norm(),
                fallback: Fallback::Skipped,
            })
        }
    };
    let d = b * &c;
    let residual = (&gr - &hr * &c).norm();
    Ok(NewtonStepReport {
        direction: d,
        reduced_dim: r,
        reduced_condition: if regular { lmax / lmin } else { f64::INFINITY },
        residual_in_lperp: residual,
        fallback,
    })
}

/// Checks `d ∈ L` and `rhs − Hd ∈ L⊥`.
pub fn certify_optimality_system<F>(hess: F, rhs: &DVector<f64>, basis: &SubspaceBasis, d: &DVector<f64>) -> Result<bool>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    check_len(rhs.len(), d.len())?;
    check_len(rhs.len(), basis.ambient_dim())?;
    let in_l = (basis.project(d) - d).norm() <= 1e-10 * (1.0 + d.norm());
    let res = basis.basis().transpose() * (rhs - hess(d)?);
    Ok(in_l && res.norm() <= 1e-8 * (1.0 + rhs.norm()))
}
