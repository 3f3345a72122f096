//! Orthonormal bases of linear subspaces of ℝⁿ.

use nalgebra::{DMatrix, DVector};

/// Relative rank cut used when orthonormalizing spanning sets.
pub const RANK_TOL: f64 = 1e-10;

/// Orthonormal basis `B` (n×r) of a subspace `L ⊆ ℝⁿ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    basis: DMatrix<f64>,
    build_tol: f64,
}

impl SubspaceBasis {
    pub fn zero(n: usize) -> Self {
        Self { basis: DMatrix::zeros(n, 0), build_tol: RANK_TOL }
    }

    pub fn full(n: usize) -> Self {
        Self { basis: DMatrix::identity(n, n), build_tol: RANK_TOL }
    }

    /// Span of the listed coordinate axes.
    pub fn coordinates(n: usize, idx: &[usize]) -> Self {
        let mut basis = DMatrix::zeros(n, idx.len());
        for (j, &i) in idx.iter().enumerate() {
            basis[(i, j)] = 1.0;
        }
        Self { basis, build_tol: RANK_TOL }
    }

    /// Span of the indicator vectors of consecutive blocks `[start, end)`,
    /// normalized. The blocks need not cover `0..n`.
    pub fn blocks(n: usize, groups: &[(usize, usize)]) -> Self {
        let mut basis = DMatrix::zeros(n, groups.len());
        for (j, &(s, e)) in groups.iter().enumerate() {
            let w = 1.0 / ((e - s) as f64).sqrt();
            for i in s..e {
                basis[(i, j)] = w;
            }
        }
        Self { basis, build_tol: RANK_TOL }
    }

    /// Orthonormal basis of the column span of `spanning` (n×k), using
    /// column-pivoted QR with rank cut `RANK_TOL · max column norm`.
    pub fn from_spanning_set(spanning: &DMatrix<f64>) -> Self {
        Self::from_spanning_set_tol(spanning, RANK_TOL)
    }

    pub fn from_spanning_set_tol(spanning: &DMatrix<f64>, tol: f64) -> Self {
        let n = spanning.nrows();
        let k = spanning.ncols();
        let max_norm = (0..k).map(|j| spanning.column(j).norm()).fold(0.0, f64::max);
        if k == 0 || max_norm == 0.0 {
            return Self { basis: DMatrix::zeros(n, 0), build_tol: tol };
        }
        let qr = spanning.clone().col_piv_qr();
        let r = qr.r();
        let cut = tol * max_norm;
        let rank = (0..r.nrows().min(r.ncols()))
            .take_while(|&i| r[(i, i)].abs() > cut)
            .count();
        let q = qr.q();
        Self { basis: q.columns(0, rank).into_owned(), build_tol: tol }
    }

    /// Columns given as separate vectors.
    pub fn from_vectors(n: usize, vectors: &[DVector<f64>]) -> Self {
        let mut m = DMatrix::zeros(n, vectors.len());
        for (j, v) in vectors.iter().enumerate() {
            m.set_column(j, v);
        }
        Self::from_spanning_set(&m)
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn build_tol(&self) -> f64 {
        self.build_tol
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.basis * (self.basis.transpose() * v)
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        (v - self.project(v)).norm() <= tol * (1.0 + v.norm())
    }

    /// Frobenius distance between the orthogonal projectors.
    pub fn projector_distance(&self, other: &SubspaceBasis) -> f64 {
        // ‖P − Q‖²_F = ‖(I − Q)B₁‖²_F + ‖(I − P)B₂‖²_F, free of cancellation
        let c = self.basis.transpose() * &other.basis;
        let r1 = &self.basis - &other.basis * c.transpose();
        let r2 = &other.basis - &self.basis * c;
        (r1.norm_squared() + r2.norm_squared()).sqrt()
    }

    pub fn same_as(&self, other: &SubspaceBasis, tol: f64) -> bool {
        self.ambient_dim() == other.ambient_dim()
            && self.rank() == other.rank()
            && self.projector_distance(other) <= tol
    }

    /// Largest singular value of `B₁ᵀB₂`, the cosine of the smallest
    /// principal angle. Zero when either subspace is trivial.
    pub fn max_principal_cosine(&self, other: &SubspaceBasis) -> f64 {
        if self.rank() == 0 || other.rank() == 0 {
            return 0.0;
        }
        let c = self.basis.transpose() * &other.basis;
        c.singular_values().iter().cloned().fold(0.0, f64::max).min(1.0)
    }

    /// Orthonormal basis of `self ∩ other`, from principal vectors with
    /// cosine above `1 − tol`.
    pub fn intersection(&self, other: &SubspaceBasis, tol: f64) -> SubspaceBasis {
        let n = self.ambient_dim();
        if self.rank() == 0 || other.rank() == 0 {
            return SubspaceBasis::zero(n);
        }
        let c = self.basis.transpose() * &other.basis;
        let svd = c.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] >= 1.0 - tol)
            .collect();
        let mut m = DMatrix::zeros(n, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            m.set_column(j, &(&self.basis * u.column(i)));
        }
        SubspaceBasis::from_spanning_set(&m)
    }

    pub fn orthonormality_error(&self) -> f64 {
        let g = self.basis.transpose() * &self.basis - DMatrix::identity(self.rank(), self.rank());
        g.amax()
    }
}
