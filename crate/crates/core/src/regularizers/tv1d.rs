use nalgebra::DVector;

use super::{PolyhedralBase, Scaled, ACT_TOL};
use crate::error::Result;
use crate::ext_real::ExtReal;
use crate::problem::Regularizer;
use crate::subspace::SubspaceBasis;

/// `Σ_{i<n} |x_i − x_{i+1}|` on signals of length `n ≥ 2`.
///
/// The conjugate is the indicator of `{z : Σ z_i = 0, |z₁ + … + z_i| ≤ 1}`.
#[derive(Debug, Clone, Copy)]
pub struct TV1DNorm {
    n: usize,
}

impl TV1DNorm {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "total variation needs at least two samples");
        Self { n }
    }

    pub fn len(&self) -> usize {
        self.n
    }
}

/// Minimizer of `tλ‖Dy‖₁ + ½‖y − v‖²` by Condat's direct algorithm.
pub fn tv1d_prox(v: &DVector<f64>, t: f64, lambda: f64) -> DVector<f64> {
    let input = v.as_slice();
    let width = input.len();
    let mut out = vec![0.0; width];
    if width == 0 {
        return DVector::zeros(0);
    }
    let lam = t * lambda;
    if lam <= 0.0 {
        return v.clone();
    }
    let (mut k, mut k0) = (0usize, 0usize);
    let (mut umin, mut umax) = (lam, -lam);
    let (mut vmin, mut vmax) = (input[0] - lam, input[0] + lam);
    let (mut kplus, mut kminus) = (0usize, 0usize);
    let twolam = 2.0 * lam;
    loop {
        while k == width - 1 {
            if umin < 0.0 {
                loop {
                    out[k0] = vmin;
                    k0 += 1;
                    if k0 > kminus {
                        break;
                    }
                }
                k = k0;
                kminus = k0;
                vmin = input[k0];
                umin = lam;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                loop {
                    out[k0] = vmax;
                    k0 += 1;
                    if k0 > kplus {
                        break;
                    }
                }
                k = k0;
                kplus = k0;
                vmax = input[k0];
                umax = -lam;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    out[k0] = vmin;
                    k0 += 1;
                }
                return DVector::from_vec(out);
            }
        }
        umin += input[k + 1] - vmin;
        if umin < -lam {
            loop {
                out[k0] = vmin;
                k0 += 1;
                if k0 > kminus {
                    break;
                }
            }
            k = k0;
            kplus = k0;
            kminus = k0;
            vmin = input[k0];
            vmax = vmin + twolam;
            umin = lam;
            umax = -lam;
            continue;
        }
        umax += input[k + 1] - vmax;
        if umax > lam {
            loop {
                out[k0] = vmax;
                k0 += 1;
                if k0 > kplus {
                    break;
                }
            }
            k = k0;
            kplus = k0;
            kminus = k0;
            vmax = input[k0];
            vmin = vmax - twolam;
            umin = lam;
            umax = -lam;
            continue;
        }
        k += 1;
        if umin >= lam {
            kminus = k;
            vmin += (umin - lam) / (kminus - k0 + 1) as f64;
            umin = lam;
        }
        if umax <= -lam {
            kplus = k;
            vmax += (umax + lam) / (kplus - k0 + 1) as f64;
            umax = -lam;
        }
    }
}

/// Block-indicator basis: neighbours `i, i+1` share a block whenever the
/// prefix sum `|z₁ + … + z_i|` is strictly below `λ`.
pub fn tv1d_effective_subspace(z: &DVector<f64>, lambda: f64) -> Result<SubspaceBasis> {
    Scaled::with_scale(TV1DNorm::new(z.len()), lambda).effective_subspace(z)
}

impl PolyhedralBase for TV1DNorm {
    fn value(&self, x: &DVector<f64>) -> ExtReal {
        ExtReal::Finite(x.as_slice().windows(2).map(|p| (p[0] - p[1]).abs()).sum())
    }

    fn prox(&self, v: &DVector<f64>, t: f64) -> DVector<f64> {
        tv1d_prox(v, t, 1.0)
    }

    fn dual_violation(&self, z: &DVector<f64>) -> f64 {
        let mut s = 0.0;
        let mut worst = 0.0f64;
        for i in 0..z.len() - 1 {
            s += z[i];
            worst = worst.max(s.abs() - 1.0);
        }
        worst.max((s + z[z.len() - 1]).abs())
    }

    fn subspace(&self, z: &DVector<f64>) -> SubspaceBasis {
        let n = z.len();
        let mut groups = Vec::new();
        let mut start = 0;
        let mut s = 0.0;
        for i in 0..n - 1 {
            s += z[i];
            if s.abs() >= 1.0 - ACT_TOL {
                groups.push((start, i + 1));
                start = i + 1;
            }
        }
        groups.push((start, n));
        SubspaceBasis::blocks(n, &groups)
    }

    fn kind(&self) -> &'static str {
        "tv1d"
    }
}
