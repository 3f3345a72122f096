mod common;

use std::path::PathBuf;
use std::sync::Arc;

use common::*;
use nalgebra::{DMatrix, DVector};
use polynewt::diagnostics::{check_tilt_stability, hessian_kernel, order_from_errors};
use polynewt::losses::LeastSquaresLoss;
use polynewt::regularizers::{L1Reg, LInfReg, TV1DReg};
use polynewt::solvers::{reference_solution, solve, Method, SolverConfig};
use polynewt::{Error, ProblemInstance, Regularizer, SubspaceBasis};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load(name: &str) -> ProblemInstance {
    ProblemInstance::from_json(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap()
}

fn point(name: &str) -> DVector<f64> {
    let x: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
    DVector::from_vec(x)
}

#[test]
fn strongly_convex_fixtures_are_stable() {
    for name in ["toy_l1_2d.json", "sc_linf.json", "sc_tv1d.json", "sc_oscar.json", "sc_nonneg_l1.json"] {
        let p = load(name);
        let x = reference_solution(&p, 1e-13).unwrap();
        let r = check_tilt_stability(&p, &x).unwrap();
        assert!(r.tilt_stable, "{name}: {r:?}");
        assert_eq!(r.ker_dim, 0, "{name}");
        assert!(r.warning.is_none(), "{name}");
    }
}

#[test]
fn toy_fixture_reports_full_subspace() {
    let r = check_tilt_stability(&load("toy_l1_2d.json"), &point("toy_l1_2d_minimizer.json")).unwrap();
    assert!(r.tilt_stable);
    assert_eq!(r.subspace_dim, 2);
}

#[test]
fn rank_deficient_fixture_is_unstable() {
    let r = check_tilt_stability(&load("rank_deficient.json"), &point("rank_deficient_point.json")).unwrap();
    assert!(!r.tilt_stable);
    assert_eq!((r.ker_dim, r.subspace_dim), (1, 2));
    assert!(r.max_principal_cosine > 1.0 - 1e-8);
}

#[test]
fn off_stationary_candidate_warns_but_reports() {
    let r = check_tilt_stability(&load("toy_l1_2d.json"), &point("toy_l1_2d_off.json")).unwrap();
    assert!(r.warning.is_some());
    assert!(r.kkt_residual > 1e-6);
}

#[test]
fn infeasible_candidate_is_rejected() {
    let p = load("toy_l1_2d.json");
    assert!(matches!(check_tilt_stability(&p, &v(&[0.0, 0.0])), Err(Error::NotStationary(_))));
}

#[test]
fn rescaling_the_objective_keeps_the_verdict() {
    for (name, pt) in [("rank_deficient.json", "rank_deficient_point.json"), ("toy_l1_2d.json", "toy_l1_2d_minimizer.json")] {
        let x = point(pt);
        let base = check_tilt_stability(&load(name), &x).unwrap();
        for c in [0.01f64, 3.0, 250.0] {
            let spec: polynewt::ProblemSpec = serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
            let (a, b) = match &spec.loss {
                polynewt::problem::LossSpec::LeastSquares { a, b } => (a.clone(), b.clone()),
                _ => unreachable!(),
            };
            let s = c.sqrt();
            let a = DMatrix::from_fn(a.len(), spec.n, |i, j| s * a[i][j]);
            let b = DVector::from_iterator(b.len(), b.iter().map(|t| s * t));
            let scaled = ProblemInstance::new("scaled", Arc::new(LeastSquaresLoss::new(a, b).unwrap()), Arc::new(L1Reg::new(c)));
            let r = check_tilt_stability(&scaled, &x).unwrap();
            assert_eq!((r.tilt_stable, r.ker_dim, r.subspace_dim), (base.tilt_stable, base.ker_dim, base.subspace_dim));
        }
    }
}

fn random_orthogonal(seed: u64, n: usize) -> DMatrix<f64> {
    let mut r = rng(seed);
    gaussian_mat(&mut r, n, n).qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn strongly_convex_loss_is_always_stable(seed in any::<u64>(), which in 0usize..3) {
        let mut r = rng(seed);
        let n = 4;
        let a = gaussian_mat(&mut r, n, n) + DMatrix::identity(n, n) * 3.0;
        let b = gaussian_vec(&mut r, n, 3.0);
        let reg: Arc<dyn Regularizer> = match which {
            0 => Arc::new(L1Reg::new(0.5)),
            1 => Arc::new(LInfReg::new(0.8)),
            _ => Arc::new(TV1DReg::new(0.5, n)),
        };
        let p = ProblemInstance::new("sc", Arc::new(LeastSquaresLoss::new(a, b).unwrap()), reg);
        let t = solve(&p, &SolverConfig { kkt_tol: 1e-12, max_iters: 100_000, ..SolverConfig::with_method(Method::Fista) }, &DVector::zeros(n)).unwrap();
        let rep = check_tilt_stability(&p, &t.x).unwrap();
        prop_assert!(rep.tilt_stable);
    }

    #[test]
    fn kernel_ignores_positive_scaling(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let mut r = rng(seed);
        let a = gaussian_mat(&mut r, 2, 5);
        let h = a.transpose() * &a;
        let k1 = hessian_kernel(&h);
        let k2 = hessian_kernel(&(&h * c));
        prop_assert_eq!(k1.rank(), 3);
        prop_assert!(k1.same_as(&k2, 1e-8));
    }

    #[test]
    fn principal_cosine_ignores_rebasing(seed in any::<u64>()) {
        let mut r = rng(seed);
        let a = SubspaceBasis::from_spanning_set(&gaussian_mat(&mut r, 5, 2));
        let b = SubspaceBasis::from_spanning_set(&gaussian_mat(&mut r, 5, 3));
        let ra = SubspaceBasis::from_spanning_set(&(a.basis() * random_orthogonal(seed ^ 1, 2)));
        let rb = SubspaceBasis::from_spanning_set(&(b.basis() * random_orthogonal(seed ^ 2, 3)));
        prop_assert!((a.max_principal_cosine(&b) - ra.max_principal_cosine(&rb)).abs() < 1e-10);
    }

    #[test]
    fn geometric_sequences_recover_their_order(c in 0.1f64..0.9, q in prop::sample::select(vec![1.0f64, 1.5, 2.0])) {
        // e_{k+1} = e_k^q starting from c·1e-3 (q > 1) or ratio c (q = 1)
        let mut e = vec![if q > 1.0 { c * 1e-3 } else { 1e-3 * c }];
        while e.len() < 40 {
            let last = *e.last().unwrap();
            let next = if q > 1.0 { last.powf(q) } else { last * c };
            if next < 1e-13 { break; }
            e.push(next);
        }
        prop_assume!(e.len() >= 3);
        let est = order_from_errors(&e).unwrap();
        prop_assert!((est.order - q).abs() < 0.05, "{est:?} for {q}");
    }
}
