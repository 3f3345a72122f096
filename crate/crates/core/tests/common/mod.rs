//! Independent oracles shared by the integration tests.
//!
//! Every oracle works from an explicit description of `C = dom g*` (halfspaces,
//! or the faces of a box mapped through `Kᵀ`) and never calls the library's
//! subspace or prox formulas.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}

pub fn gaussian_vec(r: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| scale * normal(r))
}

pub fn gaussian_mat(r: &mut ChaCha8Rng, m: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(m, n, |_, _| normal(r))
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = r.random::<f64>().max(1e-300);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Orthogonal projector onto the span of the columns of `gens`.
pub fn span_projector(n: usize, gens: &[DVector<f64>]) -> DMatrix<f64> {
    if gens.is_empty() {
        return DMatrix::zeros(n, n);
    }
    let m = DMatrix::from_columns(gens);
    let svd = m.svd(true, false);
    let smax = svd.singular_values.max();
    let u = svd.u.expect("requested");
    let mut p = DMatrix::zeros(n, n);
    for (j, s) in svd.singular_values.iter().enumerate() {
        if *s > 1e-9 * smax.max(1e-300) {
            let c = u.column(j);
            p += &c * c.transpose();
        }
    }
    p
}

/// Halfspace `⟨a, c⟩ ≤ b`.
#[derive(Debug, Clone)]
pub struct Halfspace {
    pub a: DVector<f64>,
    pub b: f64,
}

fn active(hs: &[Halfspace], z: &DVector<f64>) -> Vec<DVector<f64>> {
    hs.iter()
        .filter(|h| (h.a.dot(z) - h.b).abs() <= 1e-9 * (1.0 + h.b.abs()))
        .map(|h| h.a.clone())
        .collect()
}

/// `par N_C(z)` for `C = ∩ hs` as the span of the active normals.
pub fn normal_cone_span(n: usize, hs: &[Halfspace], z: &DVector<f64>) -> DMatrix<f64> {
    span_projector(n, &active(hs, z))
}

/// `λ·[−1, 1]ⁿ`, the dual set of `λ‖·‖₁`.
pub fn l1_dual_set(n: usize, lambda: f64) -> Vec<Halfspace> {
    let mut hs = Vec::new();
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut a = DVector::zeros(n);
            a[i] = s;
            hs.push(Halfspace { a, b: lambda });
        }
    }
    hs
}

/// `{c : c_i ≤ λ}`, the dual set of `λ‖·‖₁ + δ_{≥0}`.
pub fn nonneg_l1_dual_set(n: usize, lambda: f64) -> Vec<Halfspace> {
    (0..n)
        .map(|i| {
            let mut a = DVector::zeros(n);
            a[i] = 1.0;
            Halfspace { a, b: lambda }
        })
        .collect()
}

/// The `2ⁿ` facets `⟨s, c⟩ ≤ λ` of the ℓ1 ball, dual set of `λ‖·‖∞`.
pub fn linf_dual_set(n: usize, lambda: f64) -> Vec<Halfspace> {
    (0..1usize << n)
        .map(|mask| {
            let a = DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { 1.0 } else { -1.0 });
            Halfspace { a, b: lambda }
        })
        .collect()
}

/// `Σ_{i∈S} s_i c_i ≤ w_1 + … + w_|S|` over every signed subset `S`.
pub fn sorted_l1_dual_set(w: &[f64]) -> Vec<Halfspace> {
    let n = w.len();
    let mut hs = Vec::new();
    let mut code = vec![0u8; n];
    loop {
        let k = code.iter().filter(|&&c| c != 0).count();
        if k > 0 {
            let a = DVector::from_fn(n, |i, _| match code[i] {
                1 => 1.0,
                2 => -1.0,
                _ => 0.0,
            });
            hs.push(Halfspace { a, b: w[..k].iter().sum() });
        }
        let mut i = 0;
        while i < n && code[i] == 2 {
            code[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        code[i] += 1;
    }
    hs
}

/// `{c : 1ᵀc = 0, |c₁ + … + c_j| ≤ λ}`, the dual set of `λ‖Dx‖₁`.
pub fn tv_dual_set(n: usize, lambda: f64) -> Vec<Halfspace> {
    let mut hs = Vec::new();
    let ones = DVector::from_element(n, 1.0);
    hs.push(Halfspace { a: ones.clone(), b: 0.0 });
    hs.push(Halfspace { a: -ones, b: 0.0 });
    for j in 1..n {
        let p = DVector::from_fn(n, |i, _| if i < j { 1.0 } else { 0.0 });
        hs.push(Halfspace { a: p.clone(), b: lambda });
        hs.push(Halfspace { a: -p, b: lambda });
    }
    hs
}

/// `par N_C(z)` for `C = Kᵀ(λ·[−1,1]^m)` with `Kᵀ` injective: enumerate the
/// `3^m` faces of the box, keep the smallest one containing the lift of `z`,
/// and return the orthogonal complement of its image.
pub fn composite_l1_span(k: &DMatrix<f64>, lambda: f64, z: &DVector<f64>) -> DMatrix<f64> {
    let (m, n) = k.shape();
    let u = k.transpose().svd(true, true).solve(z, 1e-12).expect("svd solve");
    let mut best: Option<Vec<usize>> = None;
    let mut code = vec![0u8; m];
    loop {
        // code: 0 free, 1 fixed at +λ, 2 fixed at −λ
        let inside = (0..m).all(|i| match code[i] {
            0 => u[i].abs() <= lambda * (1.0 + 1e-9),
            1 => (u[i] - lambda).abs() <= 1e-9 * (1.0 + lambda),
            _ => (u[i] + lambda).abs() <= 1e-9 * (1.0 + lambda),
        });
        if inside {
            let free: Vec<usize> = (0..m).filter(|&i| code[i] == 0).collect();
            if best.as_ref().is_none_or(|b| free.len() < b.len()) {
                best = Some(free);
            }
        }
        let mut i = 0;
        while i < m && code[i] == 2 {
            code[i] = 0;
            i += 1;
        }
        if i == m {
            break;
        }
        code[i] += 1;
    }
    let free = best.expect("z lies in C");
    let dirs: Vec<DVector<f64>> = free.iter().map(|&i| k.row(i).transpose()).collect();
    DMatrix::identity(n, n) - span_projector(n, &dirs)
}

/// Projection onto `∩ hs` by Dykstra's alternating projections.
pub fn dykstra(hs: &[Halfspace], v: &DVector<f64>, sweeps: usize) -> DVector<f64> {
    let mut x = v.clone();
    let mut inc: Vec<DVector<f64>> = vec![DVector::zeros(v.len()); hs.len()];
    for _ in 0..sweeps {
        for (h, p) in hs.iter().zip(inc.iter_mut()) {
            let y = &x + &*p;
            let viol = h.a.dot(&y) - h.b;
            let proj = if viol > 0.0 { &y - &h.a * (viol / h.a.norm_squared()) } else { y.clone() };
            *p = &y - &proj;
            x = proj;
        }
    }
    x
}

/// `prox_{λ‖D·‖₁}(v)` by accelerated projected gradient on the dual box.
pub fn tv_prox_dual(v: &DVector<f64>, lambda: f64, iters: usize) -> DVector<f64> {
    let n = v.len();
    let dt = |u: &DVector<f64>| {
        DVector::from_fn(n, |j, _| {
            let a = if j < n - 1 { u[j] } else { 0.0 };
            let b = if j > 0 { u[j - 1] } else { 0.0 };
            a - b
        })
    };
    let d = |x: &DVector<f64>| DVector::from_fn(n - 1, |i, _| x[i] - x[i + 1]);
    let clip = |u: DVector<f64>| u.map(|t| t.clamp(-lambda, lambda));
    let (mut u, mut w) = (DVector::zeros(n - 1), DVector::zeros(n - 1));
    let mut t = 1.0f64;
    for _ in 0..iters {
        let x = v - dt(&w);
        let un = clip(&w + d(&x) * 0.25);
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        w = &un + (&un - &u) * ((t - 1.0) / tn);
        u = un;
        t = tn;
    }
    v - dt(&u)
}

/// Lasso `½‖Ax − b‖² + λ‖x‖₁` by enumerating all `3ⁿ` sign patterns; needs
/// `A` with full column rank so the minimizer is unique.
pub fn lasso_by_enumeration(a: &DMatrix<f64>, b: &DVector<f64>, lambda: f64) -> DVector<f64> {
    let n = a.ncols();
    let mut code = vec![0u8; n];
    let mut best: Option<(f64, DVector<f64>)> = None;
    loop {
        let s: Vec<usize> = (0..n).filter(|&i| code[i] != 0).collect();
        let sign = |i: usize| if code[i] == 1 { 1.0 } else { -1.0 };
        let mut x = DVector::zeros(n);
        let ok = if s.is_empty() {
            true
        } else {
            let asub = DMatrix::from_fn(a.nrows(), s.len(), |r, c| a[(r, s[c])]);
            let sv = DVector::from_fn(s.len(), |c, _| sign(s[c]));
            let rhs = asub.transpose() * b - sv * lambda;
            match (asub.transpose() * &asub).cholesky() {
                Some(ch) => {
                    let xs = ch.solve(&rhs);
                    for (c, &i) in s.iter().enumerate() {
                        x[i] = xs[c];
                    }
                    s.iter().enumerate().all(|(c, &i)| xs[c] * sign(i) > 0.0)
                }
                None => false,
            }
        };
        if ok {
            let corr = a.transpose() * (b - a * &x);
            let kkt = (0..n).all(|i| code[i] != 0 || corr[i].abs() <= lambda * (1.0 + 1e-12));
            if kkt {
                let val = 0.5 * (a * &x - b).norm_squared() + lambda * x.lp_norm(1);
                if best.as_ref().is_none_or(|(bv, _)| val < *bv) {
                    best = Some((val, x));
                }
            }
        }
        let mut i = 0;
        while i < n && code[i] == 2 {
            code[i] = 0;
            i += 1;
        }
        if i == n {
            break;
        }
        code[i] += 1;
    }
    best.expect("some sign pattern satisfies the optimality conditions").1
}

/// Random point of `C = λ·[−1,1]ⁿ` with a random set of saturated coordinates.
pub fn l1_dual_point(r: &mut ChaCha8Rng, n: usize, lambda: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| match r.random_range(0..4) {
        0 => lambda,
        1 => -lambda,
        2 => 0.0,
        _ => lambda * r.random_range(-0.95..0.95),
    })
}

pub fn nonneg_l1_dual_point(r: &mut ChaCha8Rng, n: usize, lambda: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| if r.random_bool(0.5) { lambda } else { lambda - r.random_range(0.05..3.0) })
}

/// Interior point with probability 1/4, otherwise a point on a random face of the ℓ1 ball.
pub fn linf_dual_point(r: &mut ChaCha8Rng, n: usize, lambda: f64) -> DVector<f64> {
    let mut theta: Vec<f64> = (0..n).map(|_| if r.random_bool(0.5) { r.random_range(0.1..1.0) } else { 0.0 }).collect();
    if theta.iter().all(|&t| t == 0.0) {
        theta[r.random_range(0..n)] = 1.0;
    }
    let total: f64 = theta.iter().sum();
    let shrink = if r.random_bool(0.25) { r.random_range(0.1..0.9) } else { 1.0 };
    DVector::from_fn(n, |i, _| {
        let s = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        s * lambda * shrink * theta[i] / total
    })
}

/// Box point with saturated and free coordinates, for `z = Kᵀu`.
pub fn box_point(r: &mut ChaCha8Rng, m: usize, lambda: f64) -> DVector<f64> {
    l1_dual_point(r, m, lambda)
}

/// `Dᵀu` for the `(n−1)×n` difference matrix with rows `e_i − e_{i+1}`.
pub fn difference_transpose(u: &DVector<f64>) -> DVector<f64> {
    let n = u.len() + 1;
    DVector::from_fn(n, |j, _| {
        let a = if j < n - 1 { u[j] } else { 0.0 };
        let b = if j > 0 { u[j - 1] } else { 0.0 };
        a - b
    })
}

/// Nonincreasing positive weights with deliberate ties.
pub fn sorted_weights(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n).map(|_| r.random_range(0.2..2.0)).collect();
    if n > 1 && r.random_bool(0.3) {
        w[1] = w[0];
    }
    w.sort_by(|a, b| b.partial_cmp(a).unwrap());
    w
}

/// Frobenius distance between two projectors.
pub fn proj_dist(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm()
}

use polynewt::regularizers::{CompositeReg, L1Reg, LInfReg, NonnegL1Reg, SortedL1Reg, TV1DReg};
use polynewt::Regularizer;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    L1,
    Linf,
    SortedL1,
    Tv1d,
    Composite,
    NonnegL1,
}

pub const FAMILIES: [Family; 6] =
    [Family::L1, Family::Linf, Family::SortedL1, Family::Tv1d, Family::Composite, Family::NonnegL1];

/// A random regularizer of the family on `ℝⁿ`, with its oracle for `par N_C(z)`.
pub struct Case {
    pub reg: Arc<dyn Regularizer>,
    pub n: usize,
    oracle: Box<dyn Fn(&DVector<f64>) -> DMatrix<f64>>,
    sample: Box<dyn Fn(&mut ChaCha8Rng) -> DVector<f64>>,
}

impl Case {
    pub fn oracle_projector(&self, z: &DVector<f64>) -> DMatrix<f64> {
        (self.oracle)(z)
    }

    /// Dual-feasible point with a random active pattern.
    pub fn dual_point(&self, r: &mut ChaCha8Rng) -> DVector<f64> {
        (self.sample)(r)
    }
}

pub fn random_case(family: Family, r: &mut ChaCha8Rng, max_n: usize) -> Case {
    let lambda = r.random_range(0.3..2.0);
    let lo = if matches!(family, Family::Tv1d | Family::Composite) { 2 } else { 1 };
    let n = r.random_range(lo..=max_n);
    match family {
        Family::L1 => {
            let hs = l1_dual_set(n, lambda);
            Case {
                reg: Arc::new(L1Reg::new(lambda)),
                n,
                oracle: Box::new(move |z| normal_cone_span(n, &hs, z)),
                sample: Box::new(move |r| l1_dual_point(r, n, lambda)),
            }
        }
        Family::NonnegL1 => {
            let hs = nonneg_l1_dual_set(n, lambda);
            Case {
                reg: Arc::new(NonnegL1Reg::new(lambda)),
                n,
                oracle: Box::new(move |z| normal_cone_span(n, &hs, z)),
                sample: Box::new(move |r| nonneg_l1_dual_point(r, n, lambda)),
            }
        }
        Family::Linf => {
            let hs = linf_dual_set(n, lambda);
            Case {
                reg: Arc::new(LInfReg::new(lambda)),
                n,
                oracle: Box::new(move |z| normal_cone_span(n, &hs, z)),
                sample: Box::new(move |r| linf_dual_point(r, n, lambda)),
            }
        }
        Family::SortedL1 => {
            let w: Vec<f64> = sorted_weights(r, n).iter().map(|x| x * lambda).collect();
            let hs = sorted_l1_dual_set(&w);
            let reg: Arc<dyn Regularizer> = Arc::new(SortedL1Reg::new(w.clone()).expect("valid weights"));
            let moreau = reg.clone();
            let w1 = w[0];
            Case {
                reg,
                n,
                oracle: Box::new(move |z| normal_cone_span(n, &hs, z)),
                sample: Box::new(move |r| {
                    let v = gaussian_vec(r, n, 2.0 * w1);
                    moreau.project_dual(&v)
                }),
            }
        }
        Family::Tv1d => {
            let hs = tv_dual_set(n, lambda);
            Case {
                reg: Arc::new(TV1DReg::new(lambda, n)),
                n,
                oracle: Box::new(move |z| normal_cone_span(n, &hs, z)),
                sample: Box::new(move |r| difference_transpose(&box_point(r, n - 1, lambda))),
            }
        }
        Family::Composite => {
            let m = r.random_range(1..n);
            let k = gaussian_mat(r, m, n);
            let reg: Arc<dyn Regularizer> =
                Arc::new(CompositeReg::new(k.clone(), Arc::new(L1Reg::new(lambda))).expect("valid map"));
            let kt = k.transpose();
            Case {
                reg,
                n,
                oracle: Box::new(move |z| composite_l1_span(&k, lambda, z)),
                sample: Box::new(move |r| &kt * box_point(r, m, lambda)),
            }
        }
    }
}

/// Largest Frobenius gap between the formula and oracle projectors over `count` draws.
pub fn worst_subspace_gap(family: Family, seed: u64, count: usize) -> f64 {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let case = random_case(family, &mut r, 6);
        let z = case.dual_point(&mut r);
        let formula = case.reg.effective_subspace(&z).expect("dual-feasible z").projector();
        worst = worst.max(proj_dist(&formula, &case.oracle_projector(&z)));
    }
    worst
}

/// Number of prox outputs failing the Fenchel–Young test out of `count` draws.
pub fn fy_failures(family: Family, seed: u64, count: usize) -> usize {
    let mut r = rng(seed);
    let mut failures = 0;
    for _ in 0..count {
        let case = random_case(family, &mut r, 6);
        let alpha = r.random_range(0.05..3.0);
        let x = gaussian_vec(&mut r, case.n, 2.0);
        let y = case.reg.prox(&x, alpha);
        let u = (&x - &y) / alpha;
        if !polynewt::fenchel_young_check(case.reg.as_ref(), &y, &u).unwrap_or(false) {
            failures += 1;
        }
    }
    failures
}
