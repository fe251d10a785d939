//! Convex function abstractions, a catalog of closed-form proximal operators,
//! and Moreau envelope machinery.
//!
//! All proximal maps follow the convention
//! `prox(t, x) = argmin_u { h(u) + ||u - x||^2 / (2t) }`, and extended values
//! (`+inf` outside a domain) are represented by `f64::INFINITY`.

use std::sync::Arc;

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{extreme_singular_values, GramDecomposition};
use crate::{Matrix, Vector};

/// Relative asymmetry tolerated in a quadratic's matrix before it is rejected.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Relative residual below which a point counts as lying on an affine set.
pub const AFFINE_FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// A convex function of an `n`-vector, possibly extended-valued.
pub trait ConvexFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &Vector) -> f64;
}

/// A convex differentiable function with Lipschitz gradient.
pub trait SmoothFunction: ConvexFunction {
    fn gradient(&self, x: &Vector) -> Vector;

    /// Lipschitz constant of the gradient.
    fn lipschitz_grad(&self) -> f64;

    /// Strong convexity modulus; zero for a merely convex function.
    fn strong_convexity(&self) -> f64 {
        0.0
    }
}

/// A proper, closed, convex function with a computable proximal map.
pub trait ProxFunction: ConvexFunction {
    fn prox(&self, t: f64, x: &Vector) -> Vector;
}

fn soft_threshold(x: &Vector, tau: f64) -> Vector {
    x.map(|v| v.signum() * (v.abs() - tau).max(0.0))
}

fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

/// Indicator of the nonnegative orthant.
#[derive(Debug, Clone)]
pub struct NonnegativeOrthant {
    dim: usize,
}

impl NonnegativeOrthant {
    pub fn new(dim: usize) -> Self {
        Self { dim }
    }
}

impl ConvexFunction for NonnegativeOrthant {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        if x.iter().all(|&v| v >= 0.0) {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

impl ProxFunction for NonnegativeOrthant {
    fn prox(&self, _t: f64, x: &Vector) -> Vector {
        x.map(|v| v.max(0.0))
    }
}

/// `q(x) = ½ xᵀQx + cᵀx` with `Q` symmetric positive definite.
///
/// The eigendecomposition of `Q` is computed once at construction. It serves
/// the prox for every step `t`, since `(I + tQ)⁻¹ = V diag(1/(1 + tλ)) Vᵀ`,
/// and it yields the exact strong convexity and gradient Lipschitz constants.
#[derive(Debug, Clone)]
pub struct Quadratic {
    q: Matrix,
    linear: Vector,
    eigenvectors: Matrix,
    eigenvalues: Vector,
}

impl Quadratic {
    pub fn new(q: Matrix, linear: Vector) -> Result<Self> {
        Self::with_tolerance(q, linear, SYMMETRY_TOLERANCE)
    }

    /// Pure quadratic form `½ xᵀQx`.
    pub fn form(q: Matrix) -> Result<Self> {
        let n = q.nrows();
        Self::new(q, Vector::zeros(n))
    }

    /// `½ σ ||x||²`.
    pub fn scaled_identity(n: usize, sigma: f64) -> Result<Self> {
        Self::form(Matrix::identity(n, n) * sigma)
    }

    pub fn with_tolerance(q: Matrix, linear: Vector, symmetry_tol: f64) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::DimensionMismatch {
                what: "quadratic matrix columns",
                expected: q.nrows(),
                found: q.ncols(),
            });
        }
        check_dim("quadratic linear term", q.nrows(), linear.len())?;
        let scale = q.amax().max(f64::MIN_POSITIVE);
        let asymmetry = (&q - q.transpose()).amax();
        if asymmetry > symmetry_tol * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        let q = (&q + q.transpose()) * 0.5;
        let eig = SymmetricEigen::new(q.clone());
        let min_eigenvalue = eig.eigenvalues.min();
        if !(min_eigenvalue > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue });
        }
        Ok(Self {
            q,
            linear,
            eigenvectors: eig.eigenvectors,
            eigenvalues: eig.eigenvalues,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn linear(&self) -> &Vector {
        &self.linear
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues.min()
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigenvalues.max()
    }
}

impl ConvexFunction for Quadratic {
    fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * x.dot(&(&self.q * x)) + self.linear.dot(x)
    }
}

impl SmoothFunction for Quadratic {
    fn gradient(&self, x: &Vector) -> Vector {
        &self.q * x + &self.linear
    }

    fn lipschitz_grad(&self) -> f64 {
        self.max_eigenvalue()
    }

    fn strong_convexity(&self) -> f64 {
        self.min_eigenvalue()
    }
}

impl ProxFunction for Quadratic {
    /// Solves `(I + tQ) u = x - t c`.
    fn prox(&self, t: f64, x: &Vector) -> Vector {
        let rhs = x - &self.linear * t;
        let mut coords = self.eigenvectors.tr_mul(&rhs);
        for (c, &lambda) in coords.iter_mut().zip(self.eigenvalues.iter()) {
            *c /= 1.0 + t * lambda;
        }
        &self.eigenvectors * coords
    }
}

/// `w ||x||₁`.
#[derive(Debug, Clone)]
pub struct L1Norm {
    dim: usize,
    weight: f64,
}

impl L1Norm {
    pub fn new(dim: usize, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid("weight", "must be finite and nonnegative"));
        }
        Ok(Self { dim, weight })
    }
}

impl ConvexFunction for L1Norm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        self.weight * x.lp_norm(1)
    }
}

impl ProxFunction for L1Norm {
    fn prox(&self, t: f64, x: &Vector) -> Vector {
        soft_threshold(x, t * self.weight)
    }
}

/// `w ||x||₂`.
#[derive(Debug, Clone)]
pub struct EuclideanNorm {
    dim: usize,
    weight: f64,
}

impl EuclideanNorm {
    pub fn new(dim: usize, weight: f64) -> Result<Self> {
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid("weight", "must be finite and nonnegative"));
        }
        Ok(Self { dim, weight })
    }
}

impl ConvexFunction for EuclideanNorm {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        self.weight * x.norm()
    }
}

impl ProxFunction for EuclideanNorm {
    fn prox(&self, t: f64, x: &Vector) -> Vector {
        let norm = x.norm();
        let tau = t * self.weight;
        if norm <= tau {
            Vector::zeros(x.len())
        } else {
            x * (1.0 - tau / norm)
        }
    }
}

/// Indicator of the box `lo <= x <= hi`.
#[derive(Debug, Clone)]
pub struct BoxIndicator {
    lo: Vector,
    hi: Vector,
}

impl BoxIndicator {
    pub fn new(lo: Vector, hi: Vector) -> Result<Self> {
        check_dim("box upper bound", lo.len(), hi.len())?;
        if lo.iter().zip(hi.iter()).any(|(l, h)| !(l <= h)) {
            return Err(Error::invalid("box", "lower bound exceeds upper bound"));
        }
        Ok(Self { lo, hi })
    }
}

impl ConvexFunction for BoxIndicator {
    fn dim(&self) -> usize {
        self.lo.len()
    }

    fn value(&self, x: &Vector) -> f64 {
        let inside = x
            .iter()
            .zip(self.lo.iter().zip(self.hi.iter()))
            .all(|(v, (l, h))| l <= v && v <= h);
        if inside {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

impl ProxFunction for BoxIndicator {
    fn prox(&self, _t: f64, x: &Vector) -> Vector {
        Vector::from_iterator(
            x.len(),
            x.iter()
                .zip(self.lo.iter().zip(self.hi.iter()))
                .map(|(&v, (&l, &h))| v.clamp(l, h)),
        )
    }
}

/// Indicator of the affine set `{x : Ax = b}`; `A` may be rank deficient as
/// long as the system is consistent.
#[derive(Debug, Clone)]
pub struct AffineIndicator {
    a: Matrix,
    b: Vector,
    gram: GramDecomposition,
}

impl AffineIndicator {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        check_dim("affine right-hand side", a.nrows(), b.len())?;
        let gram = GramDecomposition::new(&a);
        let residual = (&a * gram.solve(&a, &b) - &b).norm();
        if residual > AFFINE_FEASIBILITY_TOLERANCE * (1.0 + b.norm()) {
            return Err(Error::EmptySet("inconsistent affine system"));
        }
        Ok(Self { a, b, gram })
    }
}

impl ConvexFunction for AffineIndicator {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &Vector) -> f64 {
        let residual = (&self.a * x - &self.b).norm();
        if residual <= AFFINE_FEASIBILITY_TOLERANCE * (1.0 + self.b.norm() + x.norm()) {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

impl ProxFunction for AffineIndicator {
    fn prox(&self, _t: f64, x: &Vector) -> Vector {
        x - self.gram.solve(&self.a, &(&self.a * x - &self.b))
    }
}

/// `½ σ ||x||² + w ||x||₁`, the strongly convex nonsmooth outer objective
/// used for sparsity-promoting selection among inner solutions.
#[derive(Debug, Clone)]
pub struct ElasticNet {
    dim: usize,
    sigma: f64,
    weight: f64,
}

impl ElasticNet {
    pub fn new(dim: usize, sigma: f64, weight: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::invalid("sigma", "must be positive"));
        }
        if !(weight >= 0.0 && weight.is_finite()) {
            return Err(Error::invalid("weight", "must be finite and nonnegative"));
        }
        Ok(Self { dim, sigma, weight })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// Supremum of subgradient norms over the box `[-radius, radius]ⁿ`.
    pub fn lipschitz_on_box(&self, radius: f64) -> f64 {
        (self.dim as f64).sqrt() * (self.sigma * radius + self.weight)
    }

    /// Wraps `self` as a nonsmooth outer objective whose Lipschitz constant
    /// is taken over `[-radius, radius]ⁿ`.
    pub fn into_outer(self, radius: f64) -> Result<NonsmoothOuter> {
        let ell = self.lipschitz_on_box(radius);
        let sigma = self.sigma;
        NonsmoothOuter::new(Arc::new(self), ell, sigma)
    }
}

impl ConvexFunction for ElasticNet {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &Vector) -> f64 {
        0.5 * self.sigma * x.norm_squared() + self.weight * x.lp_norm(1)
    }
}

impl ProxFunction for ElasticNet {
    fn prox(&self, t: f64, x: &Vector) -> Vector {
        soft_threshold(x, t * self.weight) / (1.0 + t * self.sigma)
    }
}

/// `||Ax - b||²`.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    a: Matrix,
    b: Vector,
    lipschitz: f64,
    strong_convexity: f64,
}

impl LeastSquares {
    pub fn new(a: Matrix, b: Vector) -> Result<Self> {
        check_dim("least-squares right-hand side", a.nrows(), b.len())?;
        let (max_sv, min_sv) = extreme_singular_values(&a);
        if !(max_sv > 0.0) {
            return Err(Error::invalid("A", "least-squares matrix is zero"));
        }
        let strong_convexity = if a.nrows() >= a.ncols() {
            2.0 * min_sv * min_sv
        } else {
            0.0
        };
        Ok(Self {
            lipschitz: 2.0 * max_sv * max_sv,
            strong_convexity,
            a,
            b,
        })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn rhs(&self) -> &Vector {
        &self.b
    }
}

impl ConvexFunction for LeastSquares {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn value(&self, x: &Vector) -> f64 {
        (&self.a * x - &self.b).norm_squared()
    }
}

impl SmoothFunction for LeastSquares {
    fn gradient(&self, x: &Vector) -> Vector {
        self.a.tr_mul(&(&self.a * x - &self.b)) * 2.0
    }

    fn lipschitz_grad(&self) -> f64 {
        self.lipschitz
    }

    fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }
}

/// Value of the Moreau envelope `M_{s w}(x) = w(u) + ||u - x||² / (2s)`
/// with `u = prox_{s w}(x)`.
pub fn moreau_value(w: &dyn ProxFunction, s: f64, x: &Vector) -> f64 {
    let u = w.prox(s, x);
    w.value(&u) + (&u - x).norm_squared() / (2.0 * s)
}

/// Gradient of the Moreau envelope, `(x - prox_{s w}(x)) / s`.
pub fn moreau_gradient(w: &dyn ProxFunction, s: f64, x: &Vector) -> Vector {
    (x - w.prox(s, x)) / s
}

/// A strongly convex, Lipschitz continuous, possibly nonsmooth outer
/// objective accessed through its proximal map.
///
/// A strongly convex function cannot be globally Lipschitz, so
/// `lipschitz_value` is understood over a declared compact region that
/// contains the iterates of interest.
#[derive(Clone)]
pub struct NonsmoothOuter {
    func: Arc<dyn ProxFunction>,
    lipschitz_value: f64,
    strong_convexity: f64,
}

impl std::fmt::Debug for NonsmoothOuter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("NonsmoothOuter")
            .field("dim", &self.func.dim())
            .field("lipschitz_value", &self.lipschitz_value)
            .field("strong_convexity", &self.strong_convexity)
            .finish()
    }
}

impl NonsmoothOuter {
    /// `strong_convexity = 0` is representable; consumers that need a
    /// contraction reject it.
    pub fn new(
        func: Arc<dyn ProxFunction>,
        lipschitz_value: f64,
        strong_convexity: f64,
    ) -> Result<Self> {
        if !(lipschitz_value > 0.0 && lipschitz_value.is_finite()) {
            return Err(Error::invalid("lipschitz_value", "must be positive"));
        }
        if !(strong_convexity >= 0.0 && strong_convexity.is_finite()) {
            return Err(Error::invalid("strong_convexity", "must be nonnegative"));
        }
        Ok(Self {
            func,
            lipschitz_value,
            strong_convexity,
        })
    }

    pub fn function(&self) -> &Arc<dyn ProxFunction> {
        &self.func
    }

    pub fn lipschitz_value(&self) -> f64 {
        self.lipschitz_value
    }

    pub fn strong_convexity(&self) -> f64 {
        self.strong_convexity
    }

    pub fn dim(&self) -> usize {
        self.func.dim()
    }

    pub fn value(&self, x: &Vector) -> f64 {
        self.func.value(x)
    }

    pub fn prox(&self, s: f64, x: &Vector) -> Vector {
        self.func.prox(s, x)
    }
}

/// The Moreau envelope of a nonsmooth outer objective, viewed as a smooth
/// function with `1/s`-Lipschitz gradient and modulus `σ/(1 + sσ)`.
#[derive(Debug, Clone)]
pub struct MoreauEnvelope {
    outer: NonsmoothOuter,
    s: f64,
}

impl MoreauEnvelope {
    pub fn smoothing(&self) -> f64 {
        self.s
    }

    pub fn outer(&self) -> &NonsmoothOuter {
        &self.outer
    }
}

impl ConvexFunction for MoreauEnvelope {
    fn dim(&self) -> usize {
        self.outer.dim()
    }

    fn value(&self, x: &Vector) -> f64 {
        moreau_value(self.outer.func.as_ref(), self.s, x)
    }
}

impl SmoothFunction for MoreauEnvelope {
    fn gradient(&self, x: &Vector) -> Vector {
        moreau_gradient(self.outer.func.as_ref(), self.s, x)
    }

    fn lipschitz_grad(&self) -> f64 {
        1.0 / self.s
    }

    fn strong_convexity(&self) -> f64 {
        let sigma = self.outer.strong_convexity;
        sigma / (1.0 + self.s * sigma)
    }
}

/// Smooths `w` by its Moreau envelope with parameter `s`.
pub fn smooth_from_nonsmooth(w: &NonsmoothOuter, s: f64) -> Result<MoreauEnvelope> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::invalid("s", "smoothing parameter must be positive"));
    }
    if !(w.strong_convexity > 0.0) {
        return Err(Error::invalid(
            "strong_convexity",
            "outer objective must be strongly convex (sigma > 0)",
        ));
    }
    Ok(MoreauEnvelope {
        outer: w.clone(),
        s,
    })
}

/// The outer objective of a bi-level problem: either smooth (gradient steps)
/// or nonsmooth and accessed through its prox.
#[derive(Clone)]
pub enum OuterObjective {
    Smooth(Arc<dyn SmoothFunction>),
    Nonsmooth(NonsmoothOuter),
}

impl std::fmt::Debug for OuterObjective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OuterObjective::Smooth(w) => f
                .debug_struct("Smooth")
                .field("dim", &w.dim())
                .field("lipschitz_grad", &w.lipschitz_grad())
                .field("strong_convexity", &w.strong_convexity())
                .finish(),
            OuterObjective::Nonsmooth(w) => w.fmt(f),
        }
    }
}

impl OuterObjective {
    pub fn dim(&self) -> usize {
        match self {
            OuterObjective::Smooth(w) => w.dim(),
            OuterObjective::Nonsmooth(w) => w.dim(),
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            OuterObjective::Smooth(w) => w.value(x),
            OuterObjective::Nonsmooth(w) => w.value(x),
        }
    }

    pub fn strong_convexity(&self) -> f64 {
        match self {
            OuterObjective::Smooth(w) => w.strong_convexity(),
            OuterObjective::Nonsmooth(w) => w.strong_convexity(),
        }
    }

    pub fn is_smooth(&self) -> bool {
        matches!(self, OuterObjective::Smooth(_))
    }
}
