//! Reference solutions for nonnegative least-squares inner problems.
//!
//! Small instances (`n <= 12`) are solved exactly by enumerating supports:
//! the inner optimum, a vertex/ray description of the solution set `X*`, and
//! the minimizer of a quadratic `ω` over `X*`. Larger instances get a long
//! proximal gradient run for `φ*` and a certified dual lower bound for `ω*`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::functions::{ConvexFunction, Quadratic, SmoothFunction};
use crate::linalg::{self, GramDecomposition};
use crate::mappings::ProxGradMapping;
use crate::problems::{BilevelProblem, LeastSquaresInstance};
use crate::{Matrix, Vector};

/// Largest dimension handled by enumeration (`2^12` subproblems).
pub const MAX_ENUMERATION_DIM: usize = 12;
/// Default relaxation of the inner constraint in the `ω*` lower bound.
pub const DEFAULT_MU: f64 = 1e-4;

const FEASIBILITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    ActiveSetEnumeration,
    HighAccuracyPg,
}

/// `X* = {x >= 0 : x_i = 0 for i in zero, A x = fitted}` given by its
/// vertices and extreme rays.
#[derive(Debug, Clone)]
pub struct SolutionSet {
    pub dim: usize,
    /// Coordinates that may be positive on `X*`.
    pub free: Vec<usize>,
    /// Coordinates forced to zero by the optimality conditions.
    pub zero: Vec<usize>,
    /// The common value of `A x` over `X*`.
    pub fitted: Vector,
    /// Columns of `A` restricted to `free`.
    pub a_free: Matrix,
    /// One point of `X*`.
    pub particular: Vector,
    /// Orthonormal basis (as columns in `R^n`) of the null space of `A` on `free`.
    pub null_basis: Matrix,
    pub vertices: Vec<Vector>,
    /// Extreme rays normalized to unit 1-norm; empty iff `X*` is bounded.
    pub rays: Vec<Vector>,
}

impl SolutionSet {
    pub fn is_bounded(&self) -> bool {
        self.rays.is_empty()
    }

    /// Affine dimension of `X*`.
    pub fn affine_dimension(&self) -> usize {
        let v0 = &self.vertices[0];
        let cols: Vec<Vector> = self.vertices[1..]
            .iter()
            .map(|v| v - v0)
            .chain(self.rays.iter().cloned())
            .collect();
        if cols.is_empty() {
            return 0;
        }
        numerical_rank(&Matrix::from_columns(&cols))
    }

    /// Membership up to `tol` in each defining constraint.
    pub fn contains(&self, x: &Vector, tol: f64) -> bool {
        if x.len() != self.dim || x.iter().any(|&v| v < -tol) {
            return false;
        }
        if self.zero.iter().any(|&i| x[i].abs() > tol) {
            return false;
        }
        let xf = Vector::from_iterator(self.free.len(), self.free.iter().map(|&i| x[i]));
        (&self.a_free * xf - &self.fitted).norm() <= tol * (1.0 + self.fitted.norm())
    }

    /// Random points of `X*`: convex combinations of vertices plus, for an
    /// unbounded set, nonnegative multiples of rays up to `ray_scale`.
    pub fn sample<R: Rng>(&self, rng: &mut R, count: usize, ray_scale: f64) -> Vec<Vector> {
        (0..count)
            .map(|_| {
                let weights: Vec<f64> = self
                    .vertices
                    .iter()
                    .map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln())
                    .collect();
                let total: f64 = weights.iter().sum();
                let mut x = Vector::zeros(self.dim);
                for (v, w) in self.vertices.iter().zip(&weights) {
                    x.axpy(w / total, v, 1.0);
                }
                for r in &self.rays {
                    x.axpy(ray_scale * rng.random::<f64>(), r, 1.0);
                }
                x
            })
            .collect()
    }

    fn embed(&self, xf: &Vector) -> Vector {
        let mut x = Vector::zeros(self.dim);
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = xf[k];
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub phi_star: f64,
    pub solution_set: SolutionSet,
    pub x_mn: Vector,
    pub omega_star: f64,
    pub method: OracleMethod,
}

fn numerical_rank(a: &Matrix) -> usize {
    linalg::rank(a)
}

fn select_columns(a: &Matrix, cols: &[usize]) -> Matrix {
    Matrix::from_fn(a.nrows(), cols.len(), |i, j| a[(i, cols[j])])
}

fn subset(indices: &[usize], mask: usize) -> Vec<usize> {
    indices
        .iter()
        .enumerate()
        .filter(|(bit, _)| mask & (1 << bit) != 0)
        .map(|(_, &i)| i)
        .collect()
}

fn check_enumerable(n: usize) -> Result<()> {
    if n > MAX_ENUMERATION_DIM {
        Err(Error::TooLarge {
            n,
            max: MAX_ENUMERATION_DIM,
        })
    } else {
        Ok(())
    }
}

/// Exact `φ* = min{||Ax - b||² : x >= 0}` and the solution set.
///
/// Some minimizer has linearly independent support columns, and on such a
/// support it is the unconstrained least-squares solution, so the minimum over
/// all supports with a nonnegative least-squares solution is `φ*`.
pub fn solve_inner_exact(inst: &LeastSquaresInstance) -> Result<(f64, SolutionSet)> {
    let (a, b) = (&inst.a, &inst.b);
    let n = a.ncols();
    check_enumerable(n)?;
    let all: Vec<usize> = (0..n).collect();
    let mut best: Option<(f64, Vector)> = None;
    for mask in 0..(1usize << n) {
        let support = subset(&all, mask);
        let mut x = Vector::zeros(n);
        if !support.is_empty() {
            let a_s = select_columns(a, &support);
            let xs = GramDecomposition::new(&a_s).solve(&a_s, b);
            let scale = 1.0 + xs.amax();
            if xs.iter().any(|&v| v < -FEASIBILITY_TOLERANCE * scale) {
                continue;
            }
            for (k, &i) in support.iter().enumerate() {
                x[i] = xs[k].max(0.0);
            }
        }
        let value = (a * &x - b).norm_squared();
        if best.as_ref().is_none_or(|(v, _)| value < *v) {
            best = Some((value, x));
        }
    }
    let (phi_star, x_best) = best.expect("the empty support is always feasible");
    let fitted = a * &x_best;

    // the gradient 2Aᵀ(Ax - b) is constant on X*; positive entries force zeros
    let grad = a.tr_mul(&(&fitted - b)) * 2.0;
    let grad_tol = 1e-9 * (1.0 + 2.0 * a.norm() * (&fitted - b).norm());
    let (free, zero): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| grad[i] <= grad_tol);

    let a_free = select_columns(a, &free);
    let mut set = SolutionSet {
        dim: n,
        free: free.clone(),
        zero,
        fitted: fitted.clone(),
        a_free: a_free.clone(),
        particular: x_best,
        null_basis: Matrix::zeros(n, 0),
        vertices: Vec::new(),
        rays: Vec::new(),
    };
    let null_f = GramDecomposition::new(&a_free).null_space();
    let mut null_basis = Matrix::zeros(n, null_f.ncols());
    for (k, &i) in free.iter().enumerate() {
        null_basis.row_mut(i).copy_from(&null_f.row(k));
    }
    set.null_basis = null_basis;

    set.vertices = basic_solutions(&a_free, &fitted)
        .into_iter()
        .map(|xf| set.embed(&xf))
        .collect();
    if set.vertices.is_empty() {
        // cannot happen for exact arithmetic; keep the witness point
        set.vertices.push(set.particular.clone());
    }
    let mut ray_system = Matrix::zeros(a_free.nrows() + 1, a_free.ncols());
    ray_system.view_mut((0, 0), a_free.shape()).copy_from(&a_free);
    ray_system.row_mut(a_free.nrows()).fill(1.0);
    let mut ray_rhs = Vector::zeros(a_free.nrows() + 1);
    ray_rhs[a_free.nrows()] = 1.0;
    set.rays = basic_solutions(&ray_system, &ray_rhs)
        .into_iter()
        .map(|d| set.embed(&d))
        .collect();
    Ok((phi_star, set))
}

/// Basic feasible solutions of `{x >= 0 : M x = r}`, deduplicated.
fn basic_solutions(m: &Matrix, r: &Vector) -> Vec<Vector> {
    let k = m.ncols();
    let all: Vec<usize> = (0..k).collect();
    let fit_tol = 1e-9 * (1.0 + r.norm());
    let mut out: Vec<Vector> = Vec::new();
    for mask in 0..(1usize << k) {
        let basis = subset(&all, mask);
        let mut x = Vector::zeros(k);
        if !basis.is_empty() {
            let mb = select_columns(m, &basis);
            let dec = GramDecomposition::new(&mb);
            if dec.rank() < basis.len() {
                continue;
            }
            let xb = dec.solve(&mb, r);
            if xb.iter().any(|&v| v < -FEASIBILITY_TOLERANCE * (1.0 + xb.amax())) {
                continue;
            }
            for (j, &i) in basis.iter().enumerate() {
                x[i] = xb[j].max(0.0);
            }
        }
        if (m * &x - r).norm() > fit_tol {
            continue;
        }
        if out.iter().all(|v| (v - &x).norm() > 1e-9 * (1.0 + x.norm())) {
            out.push(x);
        }
    }
    out
}

/// `x*_mn = argmin{ω(x) : x in X*}` for a quadratic `ω` and `ω* = ω(x*_mn)`.
///
/// For every set of coordinates held at zero the remaining equality
/// constrained problem is solved through the null space of the constraints;
/// the optimum is the best feasible candidate. Ties go to the
/// lexicographically smallest zero set.
pub fn solve_outer_exact(set: &SolutionSet, omega: &Quadratic) -> Result<(Vector, f64)> {
    if set.vertices.is_empty() {
        return Err(Error::EmptySet("solution set description has no points"));
    }
    if omega.dim() != set.dim {
        return Err(Error::DimensionMismatch {
            what: "outer objective",
            expected: set.dim,
            found: omega.dim(),
        });
    }
    check_enumerable(set.free.len())?;
    let q = omega.matrix();
    let c = omega.linear();
    let fit_tol = 1e-9 * (1.0 + set.fitted.norm());
    let k = set.free.len();
    let positions: Vec<usize> = (0..k).collect();

    let mut best: Option<(f64, Vec<usize>, Vector)> = None;
    for mask in 0..(1usize << k) {
        // `mask` selects the coordinates (positions within `free`) left free
        let kept = subset(&positions, mask);
        let held: Vec<usize> = positions
            .iter()
            .filter(|p| !kept.contains(p))
            .map(|&p| set.free[p])
            .collect();
        let cols: Vec<usize> = kept.iter().map(|&p| set.free[p]).collect();
        let mut x = Vector::zeros(set.dim);
        if !cols.is_empty() {
            let aw = select_columns(&set.a_free, &kept);
            let dec = GramDecomposition::new(&aw);
            let xp = dec.solve(&aw, &set.fitted);
            if (&aw * &xp - &set.fitted).norm() > fit_tol {
                continue;
            }
            let qw = Matrix::from_fn(cols.len(), cols.len(), |i, j| q[(cols[i], cols[j])]);
            let cw = Vector::from_iterator(cols.len(), cols.iter().map(|&i| c[i]));
            let nb = dec.null_space();
            let xw = if nb.ncols() == 0 {
                xp
            } else {
                let h = nb.tr_mul(&qw) * &nb;
                let g = nb.tr_mul(&(&qw * &xp + &cw));
                let z = h
                    .cholesky()
                    .ok_or(Error::NotPositiveDefinite {
                        min_eigenvalue: omega.min_eigenvalue(),
                    })?
                    .solve(&g);
                xp - nb * z
            };
            if xw.iter().any(|&v| v < -FEASIBILITY_TOLERANCE * (1.0 + xw.amax())) {
                continue;
            }
            for (j, &i) in cols.iter().enumerate() {
                x[i] = xw[j].max(0.0);
            }
        } else if set.fitted.norm() > fit_tol {
            continue;
        }
        let value = omega.value(&x);
        let replace = match &best {
            None => true,
            Some((bv, bheld, _)) => {
                let tie = 1e-12 * (1.0 + bv.abs());
                value < bv - tie || ((value - bv).abs() <= tie && held < *bheld)
            }
        };
        if replace {
            best = Some((value, held, x));
        }
    }
    let (value, _, x) = best.ok_or(Error::EmptySet("no feasible face"))?;
    Ok((x, value))
}

/// Both levels solved exactly for a quadratic outer objective.
pub fn solve_exact(inst: &LeastSquaresInstance, omega: &Quadratic) -> Result<OracleSolution> {
    let (phi_star, solution_set) = solve_inner_exact(inst)?;
    let (x_mn, omega_star) = solve_outer_exact(&solution_set, omega)?;
    Ok(OracleSolution {
        phi_star,
        solution_set,
        x_mn,
        omega_star,
        method: OracleMethod::ActiveSetEnumeration,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBound {
    /// Certified lower bound on `min{ω(x) : x >= 0, φ(x) <= φ*(1 + μ)}`.
    pub value: f64,
    /// Best feasible value found for the relaxed problem.
    pub upper: f64,
    /// Set when the gap `upper - value` exceeds the tolerance.
    pub approximate: bool,
    pub iterations: usize,
}

/// Lower bound on `ω*` through the relaxation
/// `min{ω(x) : x >= 0, ||Ax - b||² <= φ*(1 + μ)}`.
///
/// Each Lagrangian `ω + λ(f - c)` is minimized over the orthant by an
/// accelerated projected gradient method; its value is bounded below by
/// `F(x⁺) - ||G||²/(2σ_λ)`, with `G` the gradient mapping, so every evaluated
/// multiplier yields a certified bound. The multiplier is located by
/// bisection on the sign of `f(x_λ) - c`.
pub fn omega_lower_bound(
    inst: &LeastSquaresInstance,
    omega: &dyn SmoothFunction,
    phi_star: f64,
    mu: f64,
    budget: usize,
) -> Result<LowerBound> {
    if !(mu >= 0.0) {
        return Err(Error::invalid("mu", "must be nonnegative"));
    }
    if !(phi_star >= 0.0) {
        return Err(Error::invalid("phi_star", "must be nonnegative"));
    }
    let sigma = omega.strong_convexity();
    if !(sigma > 0.0) {
        return Err(Error::invalid("omega", "must be strongly convex"));
    }
    let f = inst.least_squares()?;
    let limit = phi_star * (1.0 + mu);
    let tol = 1e-8;
    let mut state = DualSearch {
        f: &f,
        omega,
        limit,
        remaining: budget,
        used: 0,
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
        warm: Vector::zeros(inst.cols()),
    };
    let gap_small = |s: &DualSearch| s.upper - s.lower <= tol * (1.0 + s.lower.abs());

    let f0 = state.evaluate(0.0);
    if f0 > limit && !gap_small(&state) {
        let mut lo = 0.0;
        let mut hi = 1.0;
        while state.remaining > 0 && hi < 1e12 && state.evaluate(hi) > limit {
            lo = hi;
            hi *= 10.0;
        }
        for _ in 0..200 {
            if state.remaining == 0 || gap_small(&state) {
                break;
            }
            let mid = if lo == 0.0 { hi / 2.0 } else { (lo * hi).sqrt() };
            if state.evaluate(mid) > limit {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo.max(f64::MIN_POSITIVE) < 1.0 + 1e-12 {
                break;
            }
        }
    }
    Ok(LowerBound {
        value: state.lower,
        upper: state.upper,
        approximate: !gap_small(&state),
        iterations: state.used,
    })
}

struct DualSearch<'a> {
    f: &'a crate::functions::LeastSquares,
    omega: &'a dyn SmoothFunction,
    limit: f64,
    remaining: usize,
    used: usize,
    lower: f64,
    upper: f64,
    warm: Vector,
}

impl DualSearch<'_> {
    /// Approximately minimizes the Lagrangian at `lambda`, updates both
    /// bounds and returns `f` at the approximate minimizer.
    fn evaluate(&mut self, lambda: f64) -> f64 {
        let lip = self.omega.lipschitz_grad() + lambda * self.f.lipschitz_grad();
        let sc = self.omega.strong_convexity() + lambda * self.f.strong_convexity();
        let t = 1.0 / lip;
        let q = {
            let r = (lip / sc).sqrt();
            (r - 1.0) / (r + 1.0)
        };
        let grad = |x: &Vector| {
            let mut g = self.omega.gradient(x);
            if lambda > 0.0 {
                g.axpy(lambda, &self.f.gradient(x), 1.0);
            }
            g
        };
        let lagrangian_lower = |x: &Vector, xp: &Vector| -> (f64, f64) {
            let gm_sq = (x - xp).norm_squared() / (t * t);
            let fx = self.f.value(xp);
            let value = self.omega.value(xp) + lambda * (fx - self.limit);
            let rounding = 4.0 * f64::EPSILON * (value.abs() + lambda * (fx + self.limit) + 1.0);
            (value - gm_sq / (2.0 * sc) - rounding, fx)
        };
        let mut x_prev = self.warm.clone();
        let mut x = self.warm.clone();
        let mut best = f64::NEG_INFINITY;
        let mut f_at = f64::INFINITY;
        let mut iter = 0;
        while self.remaining > 0 {
            let y = &x + (&x - &x_prev) * q;
            let xp = (&y - grad(&y) * t).map(|v| v.max(0.0));
            self.remaining -= 1;
            self.used += 1;
            iter += 1;
            x_prev = std::mem::replace(&mut x, xp);
            if iter % 10 == 0 || self.remaining == 0 {
                // certificate at the current iterate
                let xc = (&x - grad(&x) * t).map(|v| v.max(0.0));
                let (lb, fx) = lagrangian_lower(&x, &xc);
                if lb > best {
                    best = lb;
                    f_at = fx;
                }
                if fx <= self.limit {
                    self.upper = self.upper.min(self.omega.value(&xc));
                }
                let gap = (self.omega.value(&xc) + lambda * (fx - self.limit)) - lb;
                if gap <= 1e-10 * (1.0 + lb.abs()) {
                    break;
                }
            }
        }
        self.warm = x;
        if best > self.lower {
            self.lower = best;
        }
        f_at
    }
}

#[derive(Debug, Clone)]
pub struct Reference {
    pub phi: f64,
    pub x: Vector,
    pub iterations: usize,
    /// Final `||T(x) - x||`.
    pub residual: f64,
    /// Whether the residual target was met within the budget.
    pub converged: bool,
}

/// Plain proximal gradient with `t = 1/L_f` from the origin until
/// `||T(x) - x|| <= residual_tol` or `budget` iterations.
pub fn high_accuracy_reference(
    p: &BilevelProblem,
    budget: usize,
    residual_tol: f64,
) -> Result<Reference> {
    let t_map = ProxGradMapping::new(p.inner_smooth().clone(), p.inner_prox().clone(), None)?;
    let mut x = Vector::zeros(p.dim());
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < budget {
        let next = crate::mappings::prox_grad_step(&t_map, &x);
        residual = (&next - &x).norm();
        x = next;
        iterations += 1;
        if residual <= residual_tol {
            break;
        }
    }
    Ok(Reference {
        phi: p.phi(&x),
        x,
        iterations,
        residual,
        converged: residual <= residual_tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::OuterObjective;
    use crate::problems::generate_rank_deficient_ls;
    use nalgebra::dvector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn inst(rows: usize, cols: usize, a: &[f64], b: Vector) -> LeastSquaresInstance {
        LeastSquaresInstance::new(Matrix::from_row_slice(rows, cols, a), b).unwrap()
    }

    #[test]
    fn consistent_underdetermined_segment() {
        let (phi, set) = solve_inner_exact(&inst(1, 2, &[1.0, 1.0], dvector![2.0])).unwrap();
        assert!(phi.abs() < 1e-14);
        assert!(set.is_bounded());
        assert_eq!(set.vertices.len(), 2);
        assert_eq!(set.affine_dimension(), 1);
        assert!(set.contains(&dvector![0.5, 1.5], 1e-12));
        assert!(!set.contains(&dvector![-0.5, 2.5], 1e-12));
    }

    #[test]
    fn full_rank_interior_singleton() {
        let i = inst(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0], dvector![1.0, 2.0, 3.0]);
        let (phi, set) = solve_inner_exact(&i).unwrap();
        assert!(phi.abs() < 1e-20);
        assert_eq!(set.vertices.len(), 1);
        assert!((&set.vertices[0] - dvector![1.0, 2.0]).norm() < 1e-12);
        assert_eq!(set.affine_dimension(), 0);
    }

    #[test]
    fn unreducible_residual_with_ray() {
        let i = inst(2, 2, &[1.0, 0.0, 0.0, 0.0], dvector![1.0, 1.0]);
        let (phi, set) = solve_inner_exact(&i).unwrap();
        assert!((phi - 1.0).abs() < 1e-14);
        assert!(!set.is_bounded());
        assert_eq!(set.rays.len(), 1);
        assert!((&set.rays[0] - dvector![0.0, 1.0]).norm() < 1e-12);
        assert!((&set.vertices[0] - dvector![1.0, 0.0]).norm() < 1e-12);
    }

    #[test]
    fn negative_unconstrained_solution_is_clipped() {
        // unconstrained minimizer is -1; with x >= 0 the optimum is 0
        let (phi, set) = solve_inner_exact(&inst(1, 1, &[1.0], dvector![-1.0])).unwrap();
        assert!((phi - 1.0).abs() < 1e-15);
        assert_eq!(set.zero, vec![0]);
    }

    #[test]
    fn rejects_large_instances() {
        let i = LeastSquaresInstance::new(Matrix::identity(13, 13), Vector::zeros(13)).unwrap();
        assert!(matches!(solve_inner_exact(&i), Err(Error::TooLarge { n: 13, .. })));
    }

    #[test]
    fn outer_examples() {
        let (_, set) = solve_inner_exact(&inst(1, 2, &[1.0, 1.0], dvector![2.0])).unwrap();
        let w = Quadratic::scaled_identity(2, 1.0).unwrap();
        let (x, v) = solve_outer_exact(&set, &w).unwrap();
        assert!((x - dvector![1.0, 1.0]).norm() < 1e-12);
        assert!((v - 1.0).abs() < 1e-12);

        // ½((x₁-3)² + x₂²) = ½||x||² - 3x₁ + 4.5
        let w = Quadratic::new(Matrix::identity(2, 2), dvector![-3.0, 0.0]).unwrap();
        let (x, v) = solve_outer_exact(&set, &w).unwrap();
        assert!((x - dvector![2.0, 0.0]).norm() < 1e-12);
        assert!((v + 4.5 - 0.5).abs() < 1e-12);
    }

    #[test]
    fn singleton_ignores_outer() {
        let i = inst(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0], dvector![1.0, 2.0, 3.0]);
        let (_, set) = solve_inner_exact(&i).unwrap();
        let w = Quadratic::new(Matrix::identity(2, 2), dvector![-10.0, 7.0]).unwrap();
        let (x, _) = solve_outer_exact(&set, &w).unwrap();
        assert!((x - dvector![1.0, 2.0]).norm() < 1e-10);
    }

    #[test]
    fn unbounded_set_outer_minimum() {
        // X* = {(1, x₂) : x₂ >= 0}; ω = ½||x - (0, 5)||² → (1, 5)
        let i = inst(2, 2, &[1.0, 0.0, 0.0, 0.0], dvector![1.0, 1.0]);
        let (_, set) = solve_inner_exact(&i).unwrap();
        let w = Quadratic::new(Matrix::identity(2, 2), dvector![0.0, -5.0]).unwrap();
        let (x, _) = solve_outer_exact(&set, &w).unwrap();
        assert!((x - dvector![1.0, 5.0]).norm() < 1e-10);
    }

    #[test]
    fn generated_rank_one_has_one_dimensional_solution_set() {
        let i = generate_rank_deficient_ls(3, 2, 1, 1.0, 11).unwrap();
        let (phi, set) = solve_inner_exact(&i).unwrap();
        assert!(phi < 1e-20);
        let rank = numerical_rank(&i.a);
        assert_eq!(set.affine_dimension(), 2 - rank);
    }

    #[test]
    fn sampled_points_are_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for seed in 0..10 {
            let mut i = generate_rank_deficient_ls(6, 5, 3, 0.8, seed).unwrap();
            i = crate::problems::add_noise(&i, 0.1, seed + 100).unwrap();
            let (phi, set) = solve_inner_exact(&i).unwrap();
            for x in set.sample(&mut rng, 50, 1.0) {
                assert!(x.iter().all(|&v| v >= 0.0));
                assert!((i.value(&x) - phi).abs() <= 1e-9 * (1.0 + phi), "seed {seed}");
            }
            for v in &set.vertices {
                assert!(set.contains(v, 1e-9));
            }
        }
    }

    #[test]
    fn outer_optimum_satisfies_variational_inequality() {
        for seed in 0..10 {
            let i = generate_rank_deficient_ls(5, 6, 3, 0.7, seed).unwrap();
            let w = Quadratic::new(
                crate::problems::FirstDifferenceOperator::new(6).unwrap().shifted_gram(),
                Vector::from_fn(6, |k, _| (k as f64) - 2.5),
            )
            .unwrap();
            let sol = solve_exact(&i, &w).unwrap();
            let g = w.gradient(&sol.x_mn);
            for v in &sol.solution_set.vertices {
                assert!(g.dot(&(v - &sol.x_mn)) >= -1e-8, "seed {seed}");
            }
            for r in &sol.solution_set.rays {
                assert!(g.dot(r) >= -1e-8);
            }
        }
    }

    #[test]
    fn lower_bound_examples() {
        let i = inst(1, 2, &[1.0, 1.0], dvector![2.0]);
        let w = Quadratic::scaled_identity(2, 1.0).unwrap();
        let lb = omega_lower_bound(&i, &w, 0.0, 1e-4, 1_000_000).unwrap();
        assert!(lb.value <= 1.0 + 1e-6);

        // singleton X* = {(1, 2)}
        let i = inst(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0], dvector![1.0, 2.0, 3.0]);
        let (phi, _) = solve_inner_exact(&i).unwrap();
        let lb = omega_lower_bound(&i, &w, phi, 0.0, 1_000_000).unwrap();
        assert!((lb.value - 2.5).abs() < 1e-6, "{lb:?}");

        // huge slack: the minimum of ω over the orthant is 0
        let lb = omega_lower_bound(&i, &w, 1.0, 1e6, 10_000).unwrap();
        assert!(lb.value <= 1e-12);
        assert!(!lb.approximate);
    }

    #[test]
    fn lower_bound_with_residual_is_tight() {
        let i = generate_rank_deficient_ls(8, 6, 4, 0.8, 5).unwrap();
        let i = crate::problems::add_noise(&i, 0.05, 9).unwrap();
        let w = Quadratic::scaled_identity(6, 1.0).unwrap();
        let sol = solve_exact(&i, &w).unwrap();
        let lb = omega_lower_bound(&i, &w, sol.phi_star, 1e-4, 2_000_000).unwrap();
        assert!(lb.value <= sol.omega_star + 1e-8);
        assert!(lb.value >= sol.omega_star - 0.1 * sol.omega_star.abs(), "{lb:?} vs {}", sol.omega_star);
    }

    #[test]
    fn reference_matches_enumeration() {
        for seed in 0..5 {
            let i = generate_rank_deficient_ls(8, 5, 3, 0.8, seed).unwrap();
            let i = crate::problems::add_noise(&i, 0.1, seed).unwrap();
            let (phi, _) = solve_inner_exact(&i).unwrap();
            let p = i
                .bilevel(OuterObjective::Smooth(Arc::new(Quadratic::scaled_identity(5, 1.0).unwrap())))
                .unwrap();
            let r = high_accuracy_reference(&p, 1_000_000, 1e-12).unwrap();
            assert!((r.phi - phi).abs() <= 1e-10, "seed {seed}: {} vs {phi}", r.phi);
        }
    }

    #[test]
    fn reference_on_consistent_instance_reaches_zero() {
        let i = generate_rank_deficient_ls(10, 8, 4, 0.8, 1).unwrap();
        let p = i
            .bilevel(OuterObjective::Smooth(Arc::new(Quadratic::scaled_identity(8, 1.0).unwrap())))
            .unwrap();
        let r = high_accuracy_reference(&p, 1_000_000, 1e-12).unwrap();
        assert!(r.phi <= 1e-10);
    }
}
