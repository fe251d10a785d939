//! Diagonal Tikhonov baseline: prox-grad steps on `f + λ_k ω` with `λ_k -> 0`.

use crate::error::{Error, Result};
use crate::functions::OuterObjective;
use crate::problems::BilevelProblem;
use crate::Vector;

use super::{drive, SolveConfig, Step, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaSchedule {
    /// `λ_k = λ0 / k`.
    Harmonic { lambda0: f64 },
    /// `λ_k = λ0 / k^p` with `0 < p <= 1`.
    Power { lambda0: f64, exponent: f64 },
    Constant(f64),
}

impl LambdaSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LambdaSchedule::Harmonic { lambda0 } | LambdaSchedule::Constant(lambda0) => {
                if !(lambda0 >= 0.0 && lambda0.is_finite()) {
                    return Err(Error::invalid("lambda0", "must be finite and nonnegative"));
                }
            }
            LambdaSchedule::Power { lambda0, exponent } => {
                if !(lambda0 >= 0.0 && lambda0.is_finite()) {
                    return Err(Error::invalid("lambda0", "must be finite and nonnegative"));
                }
                if !(exponent > 0.0 && exponent <= 1.0) {
                    return Err(Error::invalid("exponent", "must lie in (0, 1]"));
                }
            }
        }
        Ok(())
    }

    pub fn at(&self, k: usize) -> f64 {
        match *self {
            LambdaSchedule::Harmonic { lambda0 } => lambda0 / k as f64,
            LambdaSchedule::Power { lambda0, exponent } => lambda0 / (k as f64).powf(exponent),
            LambdaSchedule::Constant(l) => l,
        }
    }
}

/// Runs the baseline. Records store the new iterate in both `x` and `y`,
/// the forward point in `z` and `λ_k` in `alpha`. `cfg.t`, when given, caps
/// the step `1/(L_f + λ_k L_ω)`.
pub fn tikhonov_baseline_run(
    p: &BilevelProblem,
    lambda: &LambdaSchedule,
    cfg: &SolveConfig,
) -> Result<Trajectory> {
    lambda.validate()?;
    let omega = match p.outer() {
        OuterObjective::Smooth(w) => w.clone(),
        OuterObjective::Nonsmooth(_) => {
            return Err(Error::ModeMismatch(
                "the Tikhonov baseline needs a smooth outer objective",
            ))
        }
    };
    let f = p.inner_smooth().clone();
    let g = p.inner_prox().clone();
    let (lf, lw) = (f.lipschitz_grad(), omega.lipschitz_grad());
    if let Some(t) = cfg.t {
        if !(t > 0.0) {
            return Err(Error::invalid("t", "must be positive"));
        }
    }
    let cap = cfg.t.unwrap_or(f64::INFINITY);
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
    let mut last_t = f64::NAN;
    let (records, termination, iterations) = drive(&x0, cfg, p, |k, x| {
        let l = lambda.at(k);
        let t = (1.0 / (lf + l * lw)).min(cap);
        last_t = t;
        let mut grad = f.gradient(x);
        grad.axpy(l, &omega.gradient(x), 1.0);
        let forward = x - grad * t;
        let next = g.prox(t, &forward);
        Step {
            y: next.clone(),
            z: forward,
            alpha: l,
            x: next,
        }
    })?;
    Ok(Trajectory {
        records,
        termination,
        iterations,
        config: cfg.clone(),
        x0,
        t: last_t,
        s: 0.0,
        beta: 0.0,
    })
}
