use nalgebra::{DMatrix, DVector};

use super::{sign, PolyhedralBase, Scaled, ACT_TOL};
use crate::error::{Error, Result};
use crate::ext_real::ExtReal;
use crate::problem::Regularizer;
use crate::subspace::SubspaceBasis;

/// Sorted `ℓ1` norm `Σ w_i |x|_(i)` with `w₁ ≥ … ≥ w_n ≥ 0`, `w₁ > 0`.
///
/// The conjugate is the indicator of `{z : s_k(z) ≤ W_k for all k}`, where
/// `s_k` sums the `k` largest `|z_i|` and `W_k` the `k` largest weights.
#[derive(Debug, Clone)]
pub struct SortedL1Norm {
    weights: Vec<f64>,
    cum: Vec<f64>,
}

/// OSCAR weights `w_i = w1 + w2·(n − i)` for `i = 1..n`.
pub fn oscar_weights(n: usize, w1: f64, w2: f64) -> Vec<f64> {
    (0..n).map(|i| w1 + w2 * (n - 1 - i) as f64).collect()
}

impl SortedL1Norm {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || !(weights[0] > 0.0) {
            return Err(Error::Invalid("sorted l1 needs a positive leading weight".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0)
            || weights.windows(2).any(|p| p[1] > p[0])
        {
            return Err(Error::Invalid("sorted l1 weights must be finite, nonnegative and nonincreasing".into()));
        }
        let cum = weights
            .iter()
            .scan(0.0, |s, w| {
                *s += w;
                Some(*s)
            })
            .collect();
        Ok(Self { weights, cum })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn sorted_abs_desc(v: &DVector<f64>) -> (Vec<usize>, Vec<f64>) {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&i, &j| v[j].abs().total_cmp(&v[i].abs()).then(i.cmp(&j)));
    let a = order.iter().map(|&i| v[i].abs()).collect();
    (order, a)
}

/// Minimizer of `t·Σ w_i |y|_(i) + ½‖y − v‖²`, by pool-adjacent-violators
/// on the sorted magnitudes.
pub fn sorted_l1_prox(v: &DVector<f64>, t: f64, weights: &[f64]) -> DVector<f64> {
    let n = v.len();
    assert_eq!(weights.len(), n, "weight length must match the vector");
    let (order, a) = sorted_abs_desc(v);
    // blocks of (start, len, sum) with nonincreasing averages
    let mut blocks: Vec<(usize, usize, f64)> = Vec::with_capacity(n);
    for i in 0..n {
        let mut cur = (i, 1usize, a[i] - t * weights[i]);
        while let Some(&(s, l, sum)) = blocks.last() {
            if sum / l as f64 <= cur.2 / cur.1 as f64 {
                blocks.pop();
                cur = (s, l + cur.1, sum + cur.2);
            } else {
                break;
            }
        }
        blocks.push(cur);
    }
    let mut y = DVector::zeros(n);
    for (s, l, sum) in blocks {
        let val = (sum / l as f64).max(0.0);
        for &i in &order[s..s + l] {
            y[i] = v[i].signum() * val;
        }
    }
    y
}

/// Basis of `par N_C(z)` assembled from the subdifferentials of the
/// active partial-sum constraints.
pub fn sorted_l1_effective_subspace(z: &DVector<f64>, weights: &[f64]) -> Result<SubspaceBasis> {
    Scaled::with_scale(SortedL1Norm::new(weights.to_vec())?, 1.0).effective_subspace(z)
}

impl PolyhedralBase for SortedL1Norm {
    fn value(&self, x: &DVector<f64>) -> ExtReal {
        let (_, a) = sorted_abs_desc(x);
        ExtReal::Finite(a.iter().zip(&self.weights).map(|(a, w)| a * w).sum())
    }

    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        sorted_l1_prox(v, t, &self.weights)
    }

    fn dual_violation(&self, z: &DVector<f64>) -> f64 {
        let (_, a) = sorted_abs_desc(z);
        let mut s = 0.0;
        let mut worst = 0.0f64;
        for k in 0..a.len() {
            s += a[k];
            worst = worst.max(s - self.cum[k]);
        }
        worst
    }

    fn subspace(&self, z: &DVector<f64>) -> SubspaceBasis {
        let n = z.len();
        let (_, a) = sorted_abs_desc(z);
        let band = ACT_TOL * self.weights[0];
        let mut cols: Vec<DVector<f64>> = Vec::new();
        let mut seen: Vec<(usize, usize, bool)> = Vec::new();
        let mut s = 0.0;
        for k in 0..n {
            s += a[k];
            if s < self.cum[k] * (1.0 - ACT_TOL) {
                continue;
            }
            let kk = k + 1;
            let c = a[k];
            let t_set: Vec<usize> = (0..n).filter(|&i| z[i].abs() > c + band).collect();
            let e_set: Vec<usize> = (0..n).filter(|&i| (z[i].abs() - c).abs() <= band).collect();
            let zero_case = c <= band;
            let mut vk = DVector::zeros(n);
            for &i in &t_set {
                vk[i] = sign(z[i]);
            }
            if !zero_case {
                let share = (kk - t_set.len()) as f64 / e_set.len() as f64;
                for &i in &e_set {
                    vk[i] = sign(z[i]) * share;
                }
            }
            cols.push(vk);
            // the E-part depends only on (|T|, |E|, case), so skip repeats
            let key = (t_set.len(), e_set.len(), zero_case);
            if seen.contains(&key) {
                continue;
            }
            seen.push(key);
            if zero_case {
                for &j in &e_set {
                    let mut e = DVector::zeros(n);
                    e[j] = 1.0;
                    cols.push(e);
                }
            } else if t_set.len() + e_set.len() > kk {
                // otherwise |v_i| ≤ 1 pins v on E and ∂s_k(z) is a single point
                let m = *e_set.last().expect("E_k contains the k-th entry");
                for &j in &e_set[..e_set.len() - 1] {
                    let mut e = DVector::zeros(n);
                    e[j] = 1.0;
                    e[m] = -sign(z[j]) / sign(z[m]);
                    cols.push(e);
                }
            }
        }
        let mut m = DMatrix::zeros(n, cols.len());
        for (j, c) in cols.iter().enumerate() {
            m.set_column(j, c);
        }
        SubspaceBasis::from_spanning_set(&m)
    }

    fn kind(&self) -> &'static str {
        "sorted_l1"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regularizers::l1_prox;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn constant_weights_match_soft_threshold() {
        let x = v(&[3.0, -0.3, 1.2, -2.0, 0.0]);
        let y = sorted_l1_prox(&x, 0.7, &[1.0; 5]);
        assert!((y - l1_prox(&x, 0.7, 1.0)).amax() < 1e-15);
        let y1 = sorted_l1_prox(&v(&[-2.0]), 0.5, &[3.0]);
        assert!((y1[0] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn prox_output_is_sorted_like_input() {
        let x = v(&[1.0, 4.0, -3.0, 2.5]);
        let y = sorted_l1_prox(&x, 1.0, &[2.0, 1.5, 1.0, 0.5]);
        // pooled magnitudes follow the order of |x|
        assert!(y[1].abs() >= y[2].abs() && y[2].abs() >= y[3].abs() && y[3].abs() >= y[0].abs());
        assert!(y[2] <= 0.0);
    }

    #[test]
    fn subspace_examples() {
        let w = [2.0, 1.0];
        // only s₂ ≤ 3 is active, on an edge of C: normal cone is ℝ₊(1,1)
        let b = sorted_l1_effective_subspace(&v(&[1.5, 1.5]), &w).unwrap();
        assert_eq!(b.rank(), 1);
        assert!(b.contains(&v(&[1.0, 1.0]), 1e-12));
        assert_eq!(sorted_l1_effective_subspace(&v(&[0.5, 0.5]), &w).unwrap().rank(), 0);
        // vertex (2, 1): both constraints active
        assert_eq!(sorted_l1_effective_subspace(&v(&[2.0, 1.0]), &w).unwrap().rank(), 2);
        // s₁ and s₂ active with a tie among the two largest entries
        let b = sorted_l1_effective_subspace(&v(&[1.0, -1.0, 0.0]), &[1.0, 1.0, 1.0]).unwrap();
        assert!(b.same_as(&SubspaceBasis::coordinates(3, &[0, 1]), 1e-12));
    }

    #[test]
    fn zero_case_frees_the_zero_block() {
        let w = [1.0, 1.0, 0.0];
        let b = sorted_l1_effective_subspace(&v(&[1.0, 1.0, 0.0]), &w).unwrap();
        // s₁, s₂ and s₃ are all active; s₃ has |z|_(3) = 0, so e₃ joins
        assert_eq!(b.rank(), 3);
    }

    #[test]
    fn bad_weights_rejected() {
        assert!(SortedL1Norm::new(vec![1.0, 2.0]).is_err());
        assert!(SortedL1Norm::new(vec![0.0, 0.0]).is_err());
        assert!(SortedL1Norm::new(vec![1.0, -0.1]).is_err());
    }

    #[test]
    fn oscar_weights_decay_linearly() {
        assert_eq!(oscar_weights(3, 1.0, 0.5), vec![2.0, 1.5, 1.0]);
    }
}
