//! Rank-revealing helpers built on symmetric eigendecompositions of Gram
//! matrices. The dense SVD shipped with nalgebra 0.35 can return factors that
//! do not reconstruct rank-deficient inputs, so it is avoided here.

use nalgebra::SymmetricEigen;

use crate::{Matrix, Vector};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOLERANCE: f64 = 1e-6;

/// Eigendecomposition of `AᵀA`, sorted by decreasing eigenvalue.
#[derive(Debug, Clone)]
pub struct GramDecomposition {
    eigenvalues: Vec<f64>,
    eigenvectors: Matrix,
    rank: usize,
}

impl GramDecomposition {
    pub fn new(a: &Matrix) -> Self {
        let k = a.ncols();
        if k == 0 || a.nrows() == 0 {
            return Self {
                eigenvalues: vec![0.0; k],
                eigenvectors: Matrix::identity(k, k),
                rank: 0,
            };
        }
        let eig = SymmetricEigen::new(a.tr_mul(a));
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let eigenvectors = Matrix::from_fn(k, k, |r, c| eig.eigenvectors[(r, order[c])]);
        let cut = RANK_TOLERANCE * RANK_TOLERANCE * eigenvalues[0];
        let rank = eigenvalues.iter().filter(|&&l| l > cut && l > 0.0).count();
        Self {
            eigenvalues,
            eigenvectors,
            rank,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Singular values of `A` in decreasing order, zero beyond the rank.
    pub fn singular_values(&self) -> Vec<f64> {
        self.eigenvalues
            .iter()
            .enumerate()
            .map(|(i, &l)| if i < self.rank { l.sqrt() } else { 0.0 })
            .collect()
    }

    /// Minimum-norm least-squares solution of `A x ≈ b`, with two rounds of
    /// iterative refinement against the squared conditioning of `AᵀA`.
    pub fn solve(&self, a: &Matrix, b: &Vector) -> Vector {
        let mut x = self.apply_pseudo_inverse(&a.tr_mul(b));
        for _ in 0..2 {
            let r = b - a * &x;
            x += self.apply_pseudo_inverse(&a.tr_mul(&r));
        }
        x
    }

    /// `(AᵀA)⁺ v` restricted to the numerical range.
    fn apply_pseudo_inverse(&self, v: &Vector) -> Vector {
        let mut x = Vector::zeros(v.len());
        for i in 0..self.rank {
            let e = self.eigenvectors.column(i);
            x.axpy(e.dot(v) / self.eigenvalues[i], &e.into_owned(), 1.0);
        }
        x
    }

    /// Orthonormal basis of the null space of `A`, one vector per column.
    pub fn null_space(&self) -> Matrix {
        let k = self.eigenvectors.ncols();
        self.eigenvectors.columns(self.rank, k - self.rank).into_owned()
    }
}

/// Largest singular value and the smallest one over all `min(m, n)`.
pub fn extreme_singular_values(a: &Matrix) -> (f64, f64) {
    let (m, n) = a.shape();
    let gram = if m >= n { a.tr_mul(a) } else { a * a.transpose() };
    if gram.is_empty() {
        return (0.0, 0.0);
    }
    let eig = gram.symmetric_eigenvalues();
    let max = eig.max().max(0.0);
    let min = eig.min();
    let min = if min <= RANK_TOLERANCE * RANK_TOLERANCE * max {
        0.0
    } else {
        min
    };
    (max.sqrt(), min.sqrt())
}

pub fn rank(a: &Matrix) -> usize {
    if a.nrows() < a.ncols() {
        GramDecomposition::new(&a.transpose()).rank()
    } else {
        GramDecomposition::new(a).rank()
    }
}
