//! Bi-level problem instances: nonnegative least-squares inner problems with
//! controlled ill-conditioning, quadratic outer objectives built from a
//! first-difference operator, and seeded noise injection.

use std::sync::Arc;

use nalgebra::QR;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::extreme_singular_values;
use crate::functions::{
    LeastSquares, NonnegativeOrthant, OuterObjective, ProxFunction, Quadratic,
    SmoothFunction,
};
use crate::{Matrix, Vector};

pub mod io;

/// Noise standard deviations of the reference experiment grid.
pub const NOISE_LEVELS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// Normal sampler used for all seeded draws; recorded in run metadata so a
/// seed can be replayed.
pub const NORMAL_SAMPLER: &str = "rand_distr::StandardNormal (ziggurat) over ChaCha8Rng::seed_from_u64";

/// `min ω(x)` over the minimizers of `φ = f + g`.
#[derive(Clone)]
pub struct BilevelProblem {
    inner_smooth: Arc<dyn SmoothFunction>,
    inner_prox: Arc<dyn ProxFunction>,
    outer: OuterObjective,
    dim: usize,
}

impl std::fmt::Debug for BilevelProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BilevelProblem")
            .field("dim", &self.dim)
            .field("lipschitz_inner", &self.inner_smooth.lipschitz_grad())
            .field("outer", &self.outer)
            .finish()
    }
}

impl BilevelProblem {
    pub fn new(
        inner_smooth: Arc<dyn SmoothFunction>,
        inner_prox: Arc<dyn ProxFunction>,
        outer: OuterObjective,
    ) -> Result<Self> {
        let dim = inner_smooth.dim();
        for (what, found) in [("inner prox term", inner_prox.dim()), ("outer objective", outer.dim())]
        {
            if found != dim {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: dim,
                    found,
                });
            }
        }
        let lf = inner_smooth.lipschitz_grad();
        if !(lf > 0.0 && lf.is_finite()) {
            return Err(Error::invalid("lipschitz_grad", "L_f must be positive"));
        }
        if !(outer.strong_convexity() > 0.0) {
            return Err(Error::invalid(
                "strong_convexity",
                "outer objective must be strongly convex (sigma > 0)",
            ));
        }
        Ok(Self {
            inner_smooth,
            inner_prox,
            outer,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inner_smooth(&self) -> &Arc<dyn SmoothFunction> {
        &self.inner_smooth
    }

    pub fn inner_prox(&self) -> &Arc<dyn ProxFunction> {
        &self.inner_prox
    }

    pub fn outer(&self) -> &OuterObjective {
        &self.outer
    }

    /// Inner objective `φ = f + g` (may be `+inf`).
    pub fn phi(&self, x: &Vector) -> f64 {
        self.inner_smooth.value(x) + self.inner_prox.value(x)
    }

    pub fn omega(&self, x: &Vector) -> f64 {
        self.outer.value(x)
    }

    /// Same inner problem, different outer objective.
    pub fn with_outer(&self, outer: OuterObjective) -> Result<Self> {
        Self::new(self.inner_smooth.clone(), self.inner_prox.clone(), outer)
    }
}

/// `f(x) = ||Ax - b||²` with `L_f = 2 σ_max(A)²`, constrained to `x >= 0`.
#[derive(Debug, Clone)]
pub struct LeastSquaresInstance {
    pub a: Matrix,
    pub b: Vector,
    /// Standard deviation `ρ` of the noise added to `b` (0 if none).
    pub noise_sigma: f64,
    /// Seed of the generator (or of the last noise draw).
    pub seed: u64,
    /// Nonnegative point used to build a consistent right-hand side, if known.
    pub x_true: Option<Vector>,
}

impl LeastSquaresInstance {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                what: "right-hand side",
                expected: a.nrows(),
                found: b.len(),
            });
        }
        Ok(Self {
            a,
            b,
            noise_sigma: 0.0,
            seed: 0,
            x_true: None,
        })
    }

    pub fn rows(&self) -> usize {
        self.a.nrows()
    }

    pub fn cols(&self) -> usize {
        self.a.ncols()
    }

    pub fn lipschitz(&self) -> f64 {
        2.0 * extreme_singular_values(&self.a).0.powi(2)
    }

    pub fn least_squares(&self) -> Result<LeastSquares> {
        LeastSquares::new(self.a.clone(), self.b.clone())
    }

    pub fn value(&self, x: &Vector) -> f64 {
        (&self.a * x - &self.b).norm_squared()
    }

    /// Same matrix with `b` (and `x_true`) multiplied by `factor`, which
    /// rescales every solution by the same factor.
    pub fn scale_rhs(&self, factor: f64) -> Self {
        Self {
            b: &self.b * factor,
            x_true: self.x_true.as_ref().map(|x| x * factor),
            ..self.clone()
        }
    }

    /// The bi-level problem with inner `||Ax - b||² + δ_{x >= 0}`.
    pub fn bilevel(&self, outer: OuterObjective) -> Result<BilevelProblem> {
        BilevelProblem::new(
            Arc::new(self.least_squares()?),
            Arc::new(NonnegativeOrthant::new(self.cols())),
            outer,
        )
    }
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    // column-major fill keeps the draw order independent of nalgebra internals
    let mut m = Matrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

fn orthonormal_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let qr = QR::new(gaussian_matrix(rng, rows, cols));
    let mut q = qr.q();
    // fix the sign ambiguity of Householder QR
    let r = qr.r();
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Builds `A = U Σ Vᵀ` with singular values `sv_decay^(i-1)` for `i <= rank`
/// and zero beyond, random orthonormal `U`, `V`, and a consistent right-hand
/// side `b = A x_true` for a random nonnegative `x_true`.
///
/// `rank < n` makes the inner solution set a nontrivial slab of the orthant;
/// `rank = min(m, n)` is accepted and gives a full-rank system.
pub fn generate_rank_deficient_ls(
    m: usize,
    n: usize,
    rank: usize,
    sv_decay: f64,
    seed: u64,
) -> Result<LeastSquaresInstance> {
    if m == 0 || n == 0 {
        return Err(Error::invalid("m, n", "dimensions must be positive"));
    }
    if rank == 0 || rank > m.min(n) {
        return Err(Error::invalid(
            "rank",
            format!("must lie in 1..={} for a {m}x{n} matrix, got {rank}", m.min(n)),
        ));
    }
    if !(sv_decay > 0.0 && sv_decay <= 1.0) {
        return Err(Error::invalid("sv_decay", "must lie in (0, 1]"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = orthonormal_columns(&mut rng, m, rank);
    let v = orthonormal_columns(&mut rng, n, rank);
    let sigma = Vector::from_fn(rank, |i, _| sv_decay.powi(i as i32));
    let a = &u * Matrix::from_diagonal(&sigma) * v.transpose();
    let x_true = Vector::from_fn(n, |_, _| rng.random::<f64>());
    let b = &a * &x_true;
    Ok(LeastSquaresInstance {
        a,
        b,
        noise_sigma: 0.0,
        seed,
        x_true: Some(x_true),
    })
}

/// `b ← b + ρ ε` with `ε` standard normal drawn from `seed`. `ρ = 0` returns
/// the instance unchanged.
pub fn add_noise(inst: &LeastSquaresInstance, rho: f64, seed: u64) -> Result<LeastSquaresInstance> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::invalid("rho", "noise level must be finite and nonnegative"));
    }
    if rho == 0.0 {
        return Ok(inst.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Vector::from_fn(inst.b.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(LeastSquaresInstance {
        a: inst.a.clone(),
        b: &inst.b + noise * rho,
        noise_sigma: rho,
        seed,
        x_true: inst.x_true.clone(),
    })
}

/// Forward first-difference operator: row `i` has `+1` at column `i` and `-1`
/// at column `i + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FirstDifferenceOperator {
    n: usize,
}

impl FirstDifferenceOperator {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", "first-difference operator needs n >= 2"));
        }
        Ok(Self { n })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// The `(n-1) × n` bidiagonal matrix.
    pub fn matrix(&self) -> Matrix {
        let mut d = Matrix::zeros(self.n - 1, self.n);
        for i in 0..self.n - 1 {
            d[(i, i)] = 1.0;
            d[(i, i + 1)] = -1.0;
        }
        d
    }

    /// `DᵀD + I`, assembled entrywise so it is exactly symmetric.
    pub fn shifted_gram(&self) -> Matrix {
        let n = self.n;
        let mut q = Matrix::identity(n, n);
        for i in 0..n {
            let interior = (i > 0) as usize + (i + 1 < n) as usize;
            q[(i, i)] += interior as f64;
            if i + 1 < n {
                q[(i, i + 1)] = -1.0;
                q[(i + 1, i)] = -1.0;
            }
        }
        q
    }
}

/// `ω(x) = ½ xᵀQx` with `Q = DᵀD + I`, so `σ >= 1`.
pub fn quadratic_outer_from_operator(op: &FirstDifferenceOperator) -> Result<Quadratic> {
    Quadratic::form(op.shifted_gram())
}
