//! Sequential averaging of a contraction `S` and a nonexpansive map `T`,
//!
//! ```text
//! y^k = T(x^{k-1}),  z^k = S(x^{k-1}),  x^k = α_k z^k + (1 - α_k) y^k,
//! ```
//!
//! its bi-level instantiation (BiG-SAM) and a diagonal Tikhonov baseline.
//! Reported objective values are always taken at the feasible point `y^k`.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::mappings::{BoundContraction, Mapping, OuterContraction, ProxGradMapping};
use crate::problems::BilevelProblem;
use crate::Vector;

mod baseline;
pub mod rates;

pub use baseline::{tikhonov_baseline_run, LambdaSchedule};

/// Values of `γ` used in the reference experiments.
pub const GAMMA_PRESETS: [f64; 3] = [0.1, 0.5, 1.0];
pub const DEFAULT_RESIDUAL_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
/// Relative feasibility gap threshold of the reference stopping rule.
pub const REFERENCE_RELATIVE_GAP: f64 = 1e-2;

/// `α_k = min{2γ / (k(1 - β)), 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaSchedule {
    gamma: f64,
    beta: f64,
}

impl AlphaSchedule {
    pub fn new(gamma: f64, beta: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::invalid("gamma", "must lie in (0, 1]"));
        }
        if !(beta >= 0.0 && beta < 1.0) {
            return Err(Error::invalid("beta", "contraction factor must lie in [0, 1)"));
        }
        Ok(Self { gamma, beta })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self, k: usize) -> f64 {
        alpha_at(self, k)
    }
}

/// `α_k` for `k >= 1`.
pub fn alpha_at(sched: &AlphaSchedule, k: usize) -> f64 {
    debug_assert!(k >= 1);
    (2.0 * sched.gamma / (k as f64 * (1.0 - sched.beta))).min(1.0)
}

/// Run parameters. Step sizes left as `None` take their largest admissible
/// value.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub t: Option<f64>,
    pub s: Option<f64>,
    pub gamma: f64,
    /// Tighter (larger) bound on the contraction factor used in `α_k`.
    pub beta_bound: Option<f64>,
    pub max_iterations: usize,
    /// Stop once both `||x^k - x^{k-1}||` and `||y^k - x^{k-1}||` are at most this.
    pub residual_tol: f64,
    /// Known inner optimal value, enabling the gap rules below.
    pub phi_star: Option<f64>,
    /// Stop once `(φ(y^k) - φ*)/φ* < tol`.
    pub relative_gap_tol: Option<f64>,
    /// Stop once `φ(y^k) - φ* <= tol`.
    pub absolute_gap_tol: Option<f64>,
    pub time_limit: Option<Duration>,
    /// Keep every `record_every`-th iteration plus the final one.
    pub record_every: usize,
    pub x0: Option<Vector>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            t: None,
            s: None,
            gamma: 1.0,
            beta_bound: None,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            residual_tol: DEFAULT_RESIDUAL_TOL,
            phi_star: None,
            relative_gap_tol: None,
            absolute_gap_tol: None,
            time_limit: None,
            record_every: 1,
            x0: None,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", "must be positive"));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every", "must be positive"));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(Error::invalid("residual_tol", "must be nonnegative"));
        }
        if self.relative_gap_tol.is_some() || self.absolute_gap_tol.is_some() {
            let phi_star = self.phi_star.ok_or_else(|| {
                Error::invalid("phi_star", "gap stopping rules need the optimal inner value")
            })?;
            if self.relative_gap_tol.is_some() && !(phi_star > 0.0) {
                return Err(Error::invalid(
                    "phi_star",
                    "relative gap needs phi* > 0; use absolute_gap_tol instead",
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    Residual,
    RelativeGap,
    AbsoluteGap,
    MaxIterations,
    TimeLimit,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Residual => "residual",
            Termination::RelativeGap => "relative-gap",
            Termination::AbsoluteGap => "absolute-gap",
            Termination::MaxIterations => "max-iterations",
            Termination::TimeLimit => "time-limit",
        }
    }
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub x: Vector,
    /// `T(x^{k-1})`.
    pub y: Vector,
    /// `S(x^{k-1})`.
    pub z: Vector,
    pub alpha: f64,
    pub phi_y: f64,
    pub omega_y: f64,
    /// `||x^k - x^{k-1}||`.
    pub step_residual: f64,
    /// `||y^k - x^{k-1}||`.
    pub map_residual: f64,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
    pub iterations: usize,
    pub config: SolveConfig,
    pub x0: Vector,
    /// Step of `T` actually used (for the baseline: of the last iteration).
    pub t: f64,
    /// Step of `S` (0 for the baseline).
    pub s: f64,
    /// Contraction factor used in the schedule (0 for the baseline).
    pub beta: f64,
}

impl Trajectory {
    pub fn last(&self) -> &IterationRecord {
        self.records.last().expect("trajectory has at least one record")
    }

    /// Final iterate `x^K`.
    pub fn solution(&self) -> &Vector {
        &self.last().x
    }
}

/// Objective values evaluated along a run.
pub trait Objectives {
    fn inner(&self, y: &Vector) -> f64;
    fn outer(&self, y: &Vector) -> f64;
}

/// For plain fixed-point runs: reports NaN for both values.
pub struct NoObjectives;

impl Objectives for NoObjectives {
    fn inner(&self, _: &Vector) -> f64 {
        f64::NAN
    }
    fn outer(&self, _: &Vector) -> f64 {
        f64::NAN
    }
}

impl Objectives for BilevelProblem {
    fn inner(&self, y: &Vector) -> f64 {
        self.phi(y)
    }
    fn outer(&self, y: &Vector) -> f64 {
        self.omega(y)
    }
}

pub(crate) struct Step {
    pub y: Vector,
    pub z: Vector,
    pub alpha: f64,
    pub x: Vector,
}

/// Shared iteration driver: stopping logic, recording and finiteness checks.
pub(crate) fn drive(
    x0: &Vector,
    cfg: &SolveConfig,
    objectives: &dyn Objectives,
    mut step: impl FnMut(usize, &Vector) -> Step,
) -> Result<(Vec<IterationRecord>, Termination, usize)> {
    cfg.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            iteration: 0,
            what: "initial point",
        });
    }
    let needs_phi = cfg.relative_gap_tol.is_some() || cfg.absolute_gap_tol.is_some();
    let start = Instant::now();
    let mut records = Vec::new();
    let mut x = x0.clone();
    for k in 1..=cfg.max_iterations {
        let Step { y, z, alpha, x: x_new } = step(k, &x);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: k, what: "y" });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: k, what: "z" });
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { iteration: k, what: "x" });
        }
        let step_residual = (&x_new - &x).norm();
        let map_residual = (&y - &x).norm();
        let phi_y = if needs_phi { objectives.inner(&y) } else { f64::NAN };
        let elapsed = start.elapsed();

        let termination = if step_residual.max(map_residual) <= cfg.residual_tol {
            Some(Termination::Residual)
        } else if matches!(
            (cfg.relative_gap_tol, cfg.phi_star),
            (Some(tol), Some(star)) if (phi_y - star) / star < tol
        ) {
            Some(Termination::RelativeGap)
        } else if matches!(
            (cfg.absolute_gap_tol, cfg.phi_star),
            (Some(tol), Some(star)) if phi_y - star <= tol
        ) {
            Some(Termination::AbsoluteGap)
        } else if cfg.time_limit.is_some_and(|limit| elapsed >= limit) {
            Some(Termination::TimeLimit)
        } else if k == cfg.max_iterations {
            Some(Termination::MaxIterations)
        } else {
            None
        };

        if k % cfg.record_every == 0 || termination.is_some() {
            let phi_y = if needs_phi { phi_y } else { objectives.inner(&y) };
            let omega_y = objectives.outer(&y);
            records.push(IterationRecord {
                k,
                x: x_new.clone(),
                y,
                z,
                alpha,
                phi_y,
                omega_y,
                step_residual,
                map_residual,
                elapsed,
            });
        }
        x = x_new;
        if let Some(reason) = termination {
            return Ok((records, reason, k));
        }
    }
    unreachable!("the last iteration always terminates")
}

/// Runs the sequential averaging method with contraction `s_map` (factor
/// `sched.beta()`) and nonexpansive `t_map` from `x0`.
pub fn sam_run(
    s_map: &dyn Mapping,
    t_map: &dyn Mapping,
    x0: &Vector,
    sched: &AlphaSchedule,
    cfg: &SolveConfig,
    objectives: &dyn Objectives,
) -> Result<Trajectory> {
    let (records, termination, iterations) = drive(x0, cfg, objectives, |k, x| {
        let y = t_map.apply(x);
        let z = s_map.apply(x);
        let alpha = sched.alpha(k);
        let x = &z * alpha + &y * (1.0 - alpha);
        Step { y, z, alpha, x }
    })?;
    Ok(Trajectory {
        records,
        termination,
        iterations,
        config: cfg.clone(),
        x0: x0.clone(),
        t: f64::NAN,
        s: f64::NAN,
        beta: sched.beta(),
    })
}

/// The configured operators of a BiG-SAM run.
#[derive(Debug, Clone)]
pub struct BigSamOperators {
    pub t_map: ProxGradMapping,
    pub s_map: BoundContraction,
    pub schedule: AlphaSchedule,
}

impl BigSamOperators {
    pub fn new(p: &BilevelProblem, cfg: &SolveConfig) -> Result<Self> {
        let t_map = ProxGradMapping::new(p.inner_smooth().clone(), p.inner_prox().clone(), cfg.t)?;
        let mut contraction = OuterContraction::for_outer(p.outer(), cfg.s)?;
        if let Some(b) = cfg.beta_bound {
            contraction = contraction.with_beta_bound(b)?;
        }
        let schedule = AlphaSchedule::new(cfg.gamma, contraction.beta())?;
        let s_map = BoundContraction::new(contraction, p.outer().clone())?;
        Ok(Self {
            t_map,
            s_map,
            schedule,
        })
    }
}

/// BiG-SAM: `T` is the prox-grad map of the inner problem and `S` a gradient
/// step on a smooth `ω` or the prox of a nonsmooth `ω` (a gradient step on
/// its Moreau envelope).
pub fn bigsam_run(p: &BilevelProblem, cfg: &SolveConfig) -> Result<Trajectory> {
    let ops = BigSamOperators::new(p, cfg)?;
    let x0 = match &cfg.x0 {
        Some(x0) if x0.len() != p.dim() => {
            return Err(Error::DimensionMismatch {
                what: "initial point",
                expected: p.dim(),
                found: x0.len(),
            })
        }
        Some(x0) => x0.clone(),
        None => Vector::zeros(p.dim()),
    };
    let mut traj = sam_run(&ops.s_map, &ops.t_map, &x0, &ops.schedule, cfg, p)?;
    traj.t = ops.t_map.step();
    traj.s = ops.s_map.contraction().step();
    Ok(traj)
}

/// Smoothing parameter `s = 2δ/ℓ²` that keeps `ω - M_{sω} <= δ` everywhere.
pub fn smoothing_parameter(delta: f64, ell: f64) -> f64 {
    2.0 * delta / (ell * ell)
}

/// Right-hand side of the nonsmooth-mode iteration count
/// `(4C²/(tε))(2 + 3ℓ²/(2σδ) + ℓ⁴/(4σ²δ²)) - 1`, before rounding.
pub fn iteration_bound_value(
    epsilon: f64,
    delta: f64,
    c: f64,
    t: f64,
    sigma: f64,
    ell: f64,
) -> f64 {
    let ell2 = ell * ell;
    let bracket =
        2.0 + 3.0 * ell2 / (2.0 * sigma * delta) + ell2 * ell2 / (4.0 * sigma * sigma * delta * delta);
    4.0 * c * c / (t * epsilon) * bracket - 1.0
}

/// Iterations sufficient for an `ε`-accurate inner value in nonsmooth mode
/// with uniform outer accuracy `δ`.
pub fn iteration_bound(epsilon: f64, delta: f64, c: f64, t: f64, sigma: f64, ell: f64) -> u64 {
    iteration_bound_value(epsilon, delta, c, t, sigma, ell)
        .ceil()
        .max(0.0) as u64
}
