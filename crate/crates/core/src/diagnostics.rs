//! Tilt-stability test, empirical convergence order and subspace identification.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::problem::{kkt_residual, ProblemInstance};
use crate::solvers::{SolverTrace, StepKind};
use crate::subspace::SubspaceBasis;

/// Relative eigenvalue cut for the Hessian kernel.
pub const KERNEL_TOL: f64 = 1e-10;
/// Transversality margin on the largest principal cosine.
pub const COSINE_MARGIN: f64 = 1e-8;
/// Dual violation above which the candidate is not stationary.
pub const STATIONARITY_TOL: f64 = 1e-6;
/// Errors in `(TAIL_FLOOR, TAIL_CEIL)` enter the order fit.
pub const TAIL_FLOOR: f64 = 1e-13;
pub const TAIL_CEIL: f64 = 1e-2;

#[derive(Debug, Clone, Serialize)]
pub struct TiltReport {
    pub ker_dim: usize,
    pub subspace_dim: usize,
    pub max_principal_cosine: f64,
    pub tilt_stable: bool,
    pub kernel_tol: f64,
    pub cosine_margin: f64,
    /// Dual violation of `−∇f(x̄)` before projection.
    pub dual_violation: f64,
    pub kkt_residual: f64,
    pub warning: Option<String>,
}

/// Decides `Ker ∇²f(x̄) ∩ par ∂g*(−∇f(x̄)) = {0}`.
pub fn check_tilt_stability(prob: &ProblemInstance, x: &DVector<f64>) -> Result<TiltReport> {
    check_len(prob.n, x.len())?;
    if !prob.loss.in_domain(x) {
        return Err(Error::Domain);
    }
    let alpha = match prob.loss.lipschitz_hint() {
        Some(l) if l > 0.0 => 1.0 / l,
        _ => 1.0,
    };
    let kkt = kkt_residual(prob, x, alpha)?;
    let warning = (kkt > 1e-6).then(|| {
        let msg = format!("candidate is not approximately stationary (kkt_residual = {kkt:.3e})");
        warn!("{msg}");
        msg
    });

    let kernel = hessian_kernel(&prob.loss.hessian(x)?);
    let mut z = -prob.loss.gradient(x)?;
    let violation = prob.reg.dual_violation(&z);
    if violation > STATIONARITY_TOL {
        return Err(Error::NotStationary(violation));
    }
    if violation > 0.0 {
        z = prob.reg.project_dual(&z);
    }
    let l = prob.reg.effective_subspace(&z)?;
    let cos = kernel.max_principal_cosine(&l);
    let tilt_stable = kernel.rank() == 0 || l.rank() == 0 || cos <= 1.0 - COSINE_MARGIN;
    Ok(TiltReport {
        ker_dim: kernel.rank(),
        subspace_dim: l.rank(),
        max_principal_cosine: cos,
        tilt_stable,
        kernel_tol: KERNEL_TOL,
        cosine_margin: COSINE_MARGIN,
        dual_violation: violation,
        kkt_residual: kkt,
        warning,
    })
}

/// Eigenvectors of a symmetric matrix for eigenvalues below `KERNEL_TOL·λ_max`.
pub fn hessian_kernel(h: &DMatrix<f64>) -> SubspaceBasis {
    let n = h.nrows();
    let sym = (h + h.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cut = KERNEL_TOL * lmax;
    let idx: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= cut).collect();
    let mut m = DMatrix::zeros(n, idx.len());
    for (j, &i) in idx.iter().enumerate() {
        m.set_column(j, &eig.eigenvectors.column(i));
    }
    SubspaceBasis::from_spanning_set(&m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OrderEstimate {
    pub order: f64,
    pub tail_len: usize,
}

/// Slope of `log e_{i+1}` against `log e_i` over the accepted-Newton records
/// whose error to `x_ref` lies in `(1e-13, 1e-2)`.
pub fn convergence_order(trace: &SolverTrace, x_ref: &DVector<f64>) -> Result<OrderEstimate> {
    let mut errs = Vec::new();
    for r in trace.records.iter().filter(|r| r.step_kind == StepKind::Newton) {
        let x = r
            .x
            .as_ref()
            .ok_or_else(|| Error::Invalid("trace was recorded without iterates".into()))?;
        check_len(x_ref.len(), x.len())?;
        errs.push((x - x_ref).norm());
    }
    order_from_errors(&errs)
}

/// Order fit on an error sequence, keeping only entries in the tail window.
pub fn order_from_errors(errors: &[f64]) -> Result<OrderEstimate> {
    let tail: Vec<f64> = errors
        .iter()
        .cloned()
        .filter(|&e| e > TAIL_FLOOR && e < TAIL_CEIL)
        .map(f64::ln)
        .collect();
    if tail.len() < 3 {
        return Err(Error::InsufficientTail(tail.len()));
    }
    let xs = &tail[..tail.len() - 1];
    let ys = &tail[1..];
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientTail(tail.len()));
    }
    Ok(OrderEstimate { order: sxy / sxx, tail_len: tail.len() })
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentificationReport {
    /// First iteration from which every recorded subspace equals the terminal one.
    pub identified_at: Option<usize>,
    pub terminal_reduced_dim: Option<usize>,
    /// `(k, dim L_k)` for every record carrying a subspace.
    pub dim_history: Vec<(usize, usize)>,
    /// Whether `e_i ∈ L` for every `i` in the support of `x_ref`.
    pub support_contained: Option<bool>,
}

pub fn identification_report(trace: &SolverTrace, prob: &ProblemInstance, x_ref: &DVector<f64>) -> Result<IdentificationReport> {
    check_len(prob.n, x_ref.len())?;
    let with_l: Vec<(usize, &SubspaceBasis)> = trace
        .records
        .iter()
        .filter_map(|r| r.subspace.as_deref().map(|l| (r.k, l)))
        .collect();
    let dim_history = with_l.iter().map(|(k, l)| (*k, l.rank())).collect();
    let Some(&(_, terminal)) = with_l.last() else {
        return Ok(IdentificationReport {
            identified_at: None,
            terminal_reduced_dim: None,
            dim_history,
            support_contained: None,
        });
    };
    let mut identified_at = None;
    for &(k, l) in with_l.iter().rev() {
        if l.same_as(terminal, 1e-8) {
            identified_at = Some(k);
        } else {
            break;
        }
    }
    let scale = 1.0 + x_ref.amax();
    let support_contained = (0..prob.n).filter(|&i| x_ref[i].abs() > 1e-8 * scale).all(|i| {
        let mut e = DVector::zeros(prob.n);
        e[i] = 1.0;
        terminal.contains(&e, 1e-8)
    });
    Ok(IdentificationReport {
        identified_at,
        terminal_reduced_dim: Some(terminal.rank()),
        dim_history,
        support_contained: Some(support_contained),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::LeastSquaresLoss;
    use crate::problem::ZeroLoss;
    use crate::regularizers::L1Reg;
    use std::sync::Arc;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn ls(a: DMatrix<f64>, b: &[f64]) -> ProblemInstance {
        let loss = LeastSquaresLoss::new(a, v(b)).unwrap();
        ProblemInstance::new("t", Arc::new(loss), Arc::new(L1Reg::new(1.0)))
    }

    #[test]
    fn toy_is_stable_with_full_subspace() {
        let r = check_tilt_stability(&ls(DMatrix::identity(2, 2), &[2.0, -1.0]), &v(&[1.0, 0.0])).unwrap();
        assert!(r.tilt_stable);
        assert_eq!(r.ker_dim, 0);
        assert_eq!(r.subspace_dim, 2);
        assert!(r.warning.is_none());
    }

    #[test]
    fn zero_loss_at_origin_is_stable() {
        let p = ProblemInstance::new("z", Arc::new(ZeroLoss { n: 3 }), Arc::new(L1Reg::new(1.0)));
        let r = check_tilt_stability(&p, &DVector::zeros(3)).unwrap();
        assert_eq!(r.ker_dim, 3);
        assert_eq!(r.subspace_dim, 0);
        assert!(r.tilt_stable);
    }

    #[test]
    fn rank_deficient_instance_is_unstable() {
        let p = ls(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), &[2.0]);
        let r = check_tilt_stability(&p, &v(&[0.5, 0.5])).unwrap();
        assert_eq!(r.ker_dim, 1);
        assert_eq!(r.subspace_dim, 2);
        assert!(!r.tilt_stable);
    }

    #[test]
    fn far_from_stationary_is_an_error() {
        let p = ls(DMatrix::identity(2, 2), &[2.0, -1.0]);
        assert!(matches!(check_tilt_stability(&p, &v(&[-3.0, 0.0])), Err(Error::NotStationary(_))));
    }

    #[test]
    fn order_of_synthetic_sequences() {
        let quad: Vec<f64> = (0..7).map(|k| 0.5f64.powi(1 << k)).collect();
        let e = order_from_errors(&quad).unwrap();
        assert!((e.order - 2.0).abs() < 0.05, "{e:?}");
        let lin: Vec<f64> = (7..30).map(|k| 0.5f64.powi(k)).collect();
        let e = order_from_errors(&lin).unwrap();
        assert!((e.order - 1.0).abs() < 0.05, "{e:?}");
        assert!(matches!(order_from_errors(&[1e-3, 1e-6]), Err(Error::InsufficientTail(2))));
    }
}
