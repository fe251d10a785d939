//! Relative feasibility and optimality gaps.

use crate::error::{CliError, Result};

/// `(φ(y) - φ*)/φ*`. Instances with a zero residual have no relative gap;
/// use the absolute gap `φ(y) - φ*` for those.
pub fn metric_rfg(phi_y: f64, phi_star: f64) -> Result<f64> {
    if !(phi_star > 0.0) {
        return Err(CliError::config(format!(
            "relative feasibility gap needs phi* > 0 (got {phi_star}); \
             use the absolute gap for zero-residual instances"
        )));
    }
    Ok((phi_y - phi_star) / phi_star)
}

/// Optimality gap of the outer objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rog {
    pub value: f64,
    /// Set when `ω* = 0` and `value` is the absolute gap `|ω(y) - ω*|`.
    pub absolute: bool,
}

/// `|ω(y) - ω*|/|ω*|`, falling back to `|ω(y) - ω*|` when `ω* = 0`.
pub fn metric_rog(omega_y: f64, omega_star: f64) -> Rog {
    let gap = (omega_y - omega_star).abs();
    if omega_star == 0.0 {
        Rog {
            value: gap,
            absolute: true,
        }
    } else {
        Rog {
            value: gap / omega_star.abs(),
            absolute: false,
        }
    }
}
