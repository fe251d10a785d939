//! The two operators averaged by the sequential averaging method: the
//! prox-grad map of the inner composite problem (nonexpansive) and a
//! contraction built from the outer objective.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::functions::{OuterObjective, ProxFunction, SmoothFunction};
use crate::Vector;

/// A map `x ↦ M(x)` on `ℝⁿ`.
pub trait Mapping: Send + Sync {
    fn apply(&self, x: &Vector) -> Vector;
}

impl<F> Mapping for F
where
    F: Fn(&Vector) -> Vector + Send + Sync,
{
    fn apply(&self, x: &Vector) -> Vector {
        self(x)
    }
}

/// `T_t(x) = prox_{tg}(x - t∇f(x))`, nonexpansive for `0 < t <= 1/L_f`.
#[derive(Clone)]
pub struct ProxGradMapping {
    f: Arc<dyn SmoothFunction>,
    g: Arc<dyn ProxFunction>,
    t: f64,
}

impl std::fmt::Debug for ProxGradMapping {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProxGradMapping")
            .field("dim", &self.f.dim())
            .field("lipschitz_grad", &self.f.lipschitz_grad())
            .field("t", &self.t)
            .finish()
    }
}

impl ProxGradMapping {
    /// Builds `T_t`; `t = None` selects the largest admissible step `1/L_f`.
    pub fn new(
        f: Arc<dyn SmoothFunction>,
        g: Arc<dyn ProxFunction>,
        t: Option<f64>,
    ) -> Result<Self> {
        if f.dim() != g.dim() {
            return Err(Error::DimensionMismatch {
                what: "prox-grad components",
                expected: f.dim(),
                found: g.dim(),
            });
        }
        let lf = f.lipschitz_grad();
        if !(lf > 0.0 && lf.is_finite()) {
            return Err(Error::invalid("lipschitz_grad", "L_f must be positive"));
        }
        let max = 1.0 / lf;
        let t = t.unwrap_or(max);
        if !(t > 0.0 && t <= max) {
            return Err(Error::StepOutOfRange {
                name: "t",
                value: t,
                max,
            });
        }
        Ok(Self { f, g, t })
    }

    pub fn step(&self) -> f64 {
        self.t
    }

    pub fn smooth(&self) -> &Arc<dyn SmoothFunction> {
        &self.f
    }

    pub fn prox_part(&self) -> &Arc<dyn ProxFunction> {
        &self.g
    }

    /// `φ(x) = f(x) + g(x)`.
    pub fn composite_value(&self, x: &Vector) -> f64 {
        self.f.value(x) + self.g.value(x)
    }
}

/// One prox-grad step `prox_{tg}(x - t∇f(x))`.
pub fn prox_grad_step(m: &ProxGradMapping, x: &Vector) -> Vector {
    prox_grad_with_step(m.f.as_ref(), m.g.as_ref(), m.t, x)
}

/// Prox-grad step for an arbitrary `t > 0`. Fixed points of this map are the
/// minimizers of `f + g` for every positive `t`, though nonexpansiveness is
/// only guaranteed for `t <= 1/L_f`.
pub fn prox_grad_with_step(
    f: &dyn SmoothFunction,
    g: &dyn ProxFunction,
    t: f64,
    x: &Vector,
) -> Vector {
    let forward = x - f.gradient(x) * t;
    g.prox(t, &forward)
}

/// `||T_t(x) - x||`; zero exactly on the inner solution set.
pub fn fixed_point_residual(
    f: &dyn SmoothFunction,
    g: &dyn ProxFunction,
    t: f64,
    x: &Vector,
) -> f64 {
    (prox_grad_with_step(f, g, t, x) - x).norm()
}

impl Mapping for ProxGradMapping {
    fn apply(&self, x: &Vector) -> Vector {
        prox_grad_step(self, x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ContractionMode {
    /// `S(x) = x - s∇ω(x)`.
    GradientStep,
    /// `S(x) = prox_{sω}(x)`.
    ProxStep,
}

/// Contraction factor of `I - s∇ω` for `σ`-strongly convex `ω` with
/// `L`-Lipschitz gradient: `sqrt(1 - 2sσL/(σ + L))`, valid for
/// `0 < s <= 2/(L + σ)`.
pub fn contraction_factor_smooth(sigma: f64, lipschitz: f64, s: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma", "strong convexity must be positive"));
    }
    if !(lipschitz >= sigma && lipschitz.is_finite()) {
        return Err(Error::invalid(
            "lipschitz",
            format!("gradient Lipschitz constant {lipschitz} must be >= sigma {sigma}"),
        ));
    }
    let max = 2.0 / (lipschitz + sigma);
    if !(s > 0.0 && s <= max) {
        return Err(Error::StepOutOfRange {
            name: "s",
            value: s,
            max,
        });
    }
    // At s = 2/(L+σ) the radicand equals ((L-σ)/(L+σ))², which can round
    // slightly below zero when L ≈ σ.
    let radicand = 1.0 - 2.0 * s * sigma * lipschitz / (sigma + lipschitz);
    Ok(radicand.max(0.0).sqrt())
}

/// Contraction factor `1/(1 + sσ)` of `prox_{sω}` for `σ`-strongly convex `ω`.
pub fn contraction_factor_prox(sigma: f64, s: f64) -> f64 {
    1.0 / (1.0 + s * sigma)
}

/// The outer contraction `S` together with its step and factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterContraction {
    mode: ContractionMode,
    s: f64,
    beta: f64,
}

impl OuterContraction {
    /// Configures `S` for `outer`. `s = None` selects `2/(L_ω + σ)` for a
    /// smooth outer objective; a nonsmooth one has no default smoothing and
    /// requires an explicit `s`.
    pub fn for_outer(outer: &OuterObjective, s: Option<f64>) -> Result<Self> {
        match outer {
            OuterObjective::Smooth(w) => {
                let sigma = w.strong_convexity();
                let l = w.lipschitz_grad();
                let s = s.unwrap_or(2.0 / (l + sigma));
                let beta = contraction_factor_smooth(sigma, l, s)?;
                Ok(Self {
                    mode: ContractionMode::GradientStep,
                    s,
                    beta,
                })
            }
            OuterObjective::Nonsmooth(w) => {
                let sigma = w.strong_convexity();
                if !(sigma > 0.0) {
                    return Err(Error::invalid("sigma", "strong convexity must be positive"));
                }
                let s = s.ok_or_else(|| {
                    Error::invalid("s", "nonsmooth outer objective needs a smoothing parameter")
                })?;
                if !(s > 0.0 && s.is_finite()) {
                    return Err(Error::invalid("s", "must be positive"));
                }
                Ok(Self {
                    mode: ContractionMode::ProxStep,
                    s,
                    beta: contraction_factor_prox(sigma, s),
                })
            }
        }
    }

    /// Replaces the computed factor by a caller-supplied bound, which must
    /// still lie in `[β, 1)`.
    pub fn with_beta_bound(mut self, beta: f64) -> Result<Self> {
        if !(beta >= self.beta && beta < 1.0) {
            return Err(Error::invalid(
                "beta",
                format!("bound {beta} must lie in [{}, 1)", self.beta),
            ));
        }
        self.beta = beta;
        Ok(self)
    }

    pub fn mode(&self) -> ContractionMode {
        self.mode
    }

    pub fn step(&self) -> f64 {
        self.s
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Applies `S` to `x`: `x - s∇ω(x)` or `prox_{sω}(x)` depending on the mode.
pub fn contraction_step(
    c: &OuterContraction,
    outer: &OuterObjective,
    x: &Vector,
) -> Result<Vector> {
    match (c.mode, outer) {
        (ContractionMode::GradientStep, OuterObjective::Smooth(w)) => {
            Ok(x - w.gradient(x) * c.s)
        }
        (ContractionMode::ProxStep, OuterObjective::Nonsmooth(w)) => Ok(w.prox(c.s, x)),
        (ContractionMode::GradientStep, OuterObjective::Nonsmooth(_)) => Err(
            Error::ModeMismatch("gradient step requested for a nonsmooth outer objective"),
        ),
        (ContractionMode::ProxStep, OuterObjective::Smooth(_)) => Err(Error::ModeMismatch(
            "prox step requested for a smooth outer objective",
        )),
    }
}

/// `S` bound to its outer objective, usable as a [`Mapping`].
#[derive(Debug, Clone)]
pub struct BoundContraction {
    contraction: OuterContraction,
    outer: OuterObjective,
}

impl BoundContraction {
    pub fn new(contraction: OuterContraction, outer: OuterObjective) -> Result<Self> {
        let ok = matches!(
            (contraction.mode, &outer),
            (ContractionMode::GradientStep, OuterObjective::Smooth(_))
                | (ContractionMode::ProxStep, OuterObjective::Nonsmooth(_))
        );
        if !ok {
            return Err(Error::ModeMismatch("contraction mode and outer objective differ"));
        }
        Ok(Self { contraction, outer })
    }

    pub fn contraction(&self) -> &OuterContraction {
        &self.contraction
    }
}

impl Mapping for BoundContraction {
    fn apply(&self, x: &Vector) -> Vector {
        match &self.outer {
            OuterObjective::Smooth(w) => x - w.gradient(x) * self.contraction.s,
            OuterObjective::Nonsmooth(w) => w.prox(self.contraction.s, x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functions::{
        smooth_from_nonsmooth, ElasticNet, LeastSquares, NonnegativeOrthant, NonsmoothOuter,
        Quadratic,
    };
    use crate::Matrix;
    use nalgebra::dvector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
        Vector::from_fn(n, |_, _| rng.random_range(-scale..scale))
    }

    #[test]
    fn prox_grad_shifted_norm() {
        let c = dvector![2.0, -1.0];
        // ½||x - c||² = ½xᵀx - cᵀx + const
        let f = Quadratic::new(Matrix::identity(2, 2), -&c).unwrap();
        let m = ProxGradMapping::new(Arc::new(f), Arc::new(NonnegativeOrthant::new(2)), Some(1.0))
            .unwrap();
        assert_eq!(prox_grad_step(&m, &dvector![0.0, 0.0]), dvector![2.0, 0.0]);
    }

    #[test]
    fn prox_grad_least_squares_example() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let f = LeastSquares::new(a, dvector![2.0]).unwrap();
        assert!((f.lipschitz_grad() - 4.0).abs() < 1e-14);
        let m = ProxGradMapping::new(Arc::new(f), Arc::new(NonnegativeOrthant::new(2)), None)
            .unwrap();
        assert!((m.step() - 0.25).abs() < 1e-15);
        let y = prox_grad_step(&m, &dvector![0.0, 0.0]);
        assert!((y - dvector![1.0, 1.0]).amax() < 1e-14);
        // (1, 1) is a minimizer, hence a fixed point.
        let x_star = dvector![1.0, 1.0];
        assert!((prox_grad_step(&m, &x_star) - &x_star).norm() < 1e-12);
        // A point off the solution set is not.
        assert!((prox_grad_step(&m, &dvector![0.5, 0.5]) - dvector![0.5, 0.5]).norm() > 0.1);
    }

    #[test]
    fn prox_grad_rejects_large_step() {
        let f = Quadratic::scaled_identity(2, 2.0).unwrap();
        let err = ProxGradMapping::new(
            Arc::new(f),
            Arc::new(NonnegativeOrthant::new(2)),
            Some(0.6),
        )
        .unwrap_err();
        assert!(matches!(err, Error::StepOutOfRange { name: "t", .. }));
    }

    #[test]
    fn fixed_point_test_holds_for_any_positive_step() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let f = LeastSquares::new(a, dvector![2.0]).unwrap();
        let g = NonnegativeOrthant::new(2);
        for &t in &[0.01, 0.25, 3.0, 50.0] {
            assert!(fixed_point_residual(&f, &g, t, &dvector![0.5, 1.5]) < 1e-12);
            assert!(fixed_point_residual(&f, &g, t, &dvector![0.5, 0.5]) > 1e-3);
        }
    }

    #[test]
    fn contraction_factor_examples() {
        assert_eq!(contraction_factor_smooth(1.0, 1.0, 1.0).unwrap(), 0.0);
        assert!((contraction_factor_smooth(1.0, 3.0, 0.5).unwrap() - 0.5).abs() < 1e-15);
        match contraction_factor_smooth(1.0, 1.0, 1.0001) {
            Err(Error::StepOutOfRange { max, .. }) => assert_eq!(max, 1.0),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(contraction_factor_prox(1.0, 1.0), 0.5);
        assert!((contraction_factor_prox(2.0, 0.05) - 1.0 / 1.1).abs() < 1e-15);
        assert!((contraction_factor_prox(1.0, 99.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn contraction_step_examples() {
        let w = OuterObjective::Smooth(Arc::new(Quadratic::scaled_identity(2, 1.0).unwrap()));
        let c = OuterContraction::for_outer(&w, Some(1.0)).unwrap();
        assert_eq!(c.beta(), 0.0);
        assert_eq!(contraction_step(&c, &w, &dvector![3.0, -7.0]).unwrap(), dvector![0.0, 0.0]);

        let half_sq: Arc<dyn ProxFunction> = Arc::new(Quadratic::scaled_identity(2, 1.0).unwrap());
        let ns = OuterObjective::Nonsmooth(NonsmoothOuter::new(half_sq, 10.0, 1.0).unwrap());
        let c = OuterContraction::for_outer(&ns, Some(1.0)).unwrap();
        let z = contraction_step(&c, &ns, &dvector![2.0, -4.0]).unwrap();
        assert!((z - dvector![1.0, -2.0]).amax() < 1e-15);
    }

    #[test]
    fn contraction_step_mode_mismatch() {
        let w = OuterObjective::Smooth(Arc::new(Quadratic::scaled_identity(2, 1.0).unwrap()));
        let net: Arc<dyn ProxFunction> = Arc::new(ElasticNet::new(2, 1.0, 1.0).unwrap());
        let ns = OuterObjective::Nonsmooth(NonsmoothOuter::new(net, 5.0, 1.0).unwrap());
        let c_smooth = OuterContraction::for_outer(&w, None).unwrap();
        let c_prox = OuterContraction::for_outer(&ns, Some(0.1)).unwrap();
        assert!(matches!(
            contraction_step(&c_smooth, &ns, &dvector![1.0, 1.0]),
            Err(Error::ModeMismatch(_))
        ));
        assert!(matches!(
            contraction_step(&c_prox, &w, &dvector![1.0, 1.0]),
            Err(Error::ModeMismatch(_))
        ));
        assert!(BoundContraction::new(c_prox, w).is_err());
    }

    #[test]
    fn envelope_gradient_step_equals_prox_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = ElasticNet::new(4, 1.3, 0.7).unwrap();
        let outer = net.into_outer(10.0).unwrap();
        let s = 0.37;
        let env = smooth_from_nonsmooth(&outer, s).unwrap();
        for _ in 0..100 {
            let x = random_vector(&mut rng, 4, 5.0);
            let grad_step = &x - env.gradient(&x) * s;
            let prox_step = outer.prox(s, &x);
            assert!((grad_step - prox_step).amax() < 1e-12);
        }
    }

    #[test]
    fn beta_override_must_be_conservative() {
        let w = OuterObjective::Smooth(Arc::new(
            Quadratic::form(Matrix::from_diagonal(&dvector![1.0, 3.0])).unwrap(),
        ));
        let c = OuterContraction::for_outer(&w, None).unwrap();
        assert!((c.beta() - 0.5).abs() < 1e-15);
        assert!(c.with_beta_bound(0.4).is_err());
        assert!(c.with_beta_bound(1.0).is_err());
        assert_eq!(c.with_beta_bound(0.6).unwrap().beta(), 0.6);
    }

    #[test]
    fn prox_grad_is_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = Matrix::from_fn(4, 6, |_, _| rng.random_range(-1.0..1.0));
        let b = random_vector(&mut rng, 4, 1.0);
        let f = LeastSquares::new(a, b).unwrap();
        let m = ProxGradMapping::new(Arc::new(f), Arc::new(NonnegativeOrthant::new(6)), None)
            .unwrap();
        for _ in 0..1000 {
            let x = random_vector(&mut rng, 6, 5.0);
            let y = random_vector(&mut rng, 6, 5.0);
            let lhs = (m.apply(&x) - m.apply(&y)).norm();
            assert!(lhs <= (&x - &y).norm() + 1e-10);
        }
    }

    #[test]
    fn proximal_inequality_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = Matrix::from_fn(3, 5, |_, _| rng.random_range(-1.0..1.0));
        let b = random_vector(&mut rng, 3, 2.0);
        let f = LeastSquares::new(a, b).unwrap();
        let m = ProxGradMapping::new(Arc::new(f), Arc::new(NonnegativeOrthant::new(5)), None)
            .unwrap();
        let t = m.step();
        for _ in 0..1000 {
            let x = random_vector(&mut rng, 5, 3.0);
            // u restricted to the domain of φ
            let u = random_vector(&mut rng, 5, 3.0).map(f64::abs);
            let xp = m.apply(&x);
            let lhs = m.composite_value(&xp) - m.composite_value(&u);
            let d = &x - &xp;
            let rhs = d.dot(&(&x - &u)) / t - d.norm_squared() / (2.0 * t);
            assert!(lhs <= rhs + 1e-8, "{lhs} > {rhs}");
        }
    }
}
