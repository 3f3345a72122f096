mod common;

use common::*;
use polynewt::regularizers::{sorted_l1_effective_subspace, SortedL1Reg};
use polynewt::Regularizer;

#[test]
fn formula_matches_generator_enumeration() {
    for (i, f) in FAMILIES.iter().enumerate() {
        let gap = worst_subspace_gap(*f, 100 + i as u64, 200);
        assert!(gap <= 1e-8, "{f:?}: projector gap {gap:e}");
    }
}

#[test]
fn sorted_l1_tie_at_lower_weight_has_rank_one() {
    let l = sorted_l1_effective_subspace(&v(&[1.5, 1.5]), &[2.0, 1.0]).unwrap();
    assert_eq!(l.rank(), 1);
    let oracle = normal_cone_span(2, &sorted_l1_dual_set(&[2.0, 1.0]), &v(&[1.5, 1.5]));
    assert!(proj_dist(&l.projector(), &oracle) < 1e-12);
}

#[test]
fn linf_interior_point_gives_zero_subspace() {
    let reg = polynewt::regularizers::LInfReg::new(1.0);
    assert_eq!(reg.effective_subspace(&v(&[0.2, -0.3, 0.1])).unwrap().rank(), 0);
}

#[test]
fn oscar_weights_match_explicit_sequence() {
    let reg = SortedL1Reg::oscar(4, 1.0, 0.5).unwrap();
    let z = v(&[2.5, 0.0, 0.0, 0.0]);
    let hs = sorted_l1_dual_set(&[2.5, 2.0, 1.5, 1.0]);
    let oracle = normal_cone_span(4, &hs, &z);
    assert!(proj_dist(&reg.effective_subspace(&z).unwrap().projector(), &oracle) < 1e-12);
}

#[test]
fn sampled_points_hit_proper_faces() {
    for f in FAMILIES {
        let mut r = rng(9);
        let mut proper = 0;
        for _ in 0..200 {
            let case = random_case(f, &mut r, 6);
            let z = case.dual_point(&mut r);
            let rank = case.reg.effective_subspace(&z).unwrap().rank();
            if rank > 0 && rank < case.n {
                proper += 1;
            }
        }
        assert!(proper >= 40, "{f:?}: only {proper} draws on proper faces");
    }
}

#[test]
fn scale_law_for_subspaces() {
    use polynewt::regularizers::{L1Reg, LInfReg, TV1DReg};
    let mut r = rng(5);
    for _ in 0..50 {
        let lambda = 0.7;
        let z1 = l1_dual_point(&mut r, 5, 1.0);
        let a = L1Reg::new(lambda).effective_subspace(&(&z1 * lambda)).unwrap();
        assert!(a.same_as(&L1Reg::new(1.0).effective_subspace(&z1).unwrap(), 1e-10));
        let zi = linf_dual_point(&mut r, 5, 1.0);
        let a = LInfReg::new(lambda).effective_subspace(&(&zi * lambda)).unwrap();
        assert!(a.same_as(&LInfReg::new(1.0).effective_subspace(&zi).unwrap(), 1e-10));
        let zt = difference_transpose(&box_point(&mut r, 4, 1.0));
        let a = TV1DReg::new(lambda, 5).effective_subspace(&(&zt * lambda)).unwrap();
        assert!(a.same_as(&TV1DReg::new(1.0, 5).effective_subspace(&zt).unwrap(), 1e-10));
    }
}
