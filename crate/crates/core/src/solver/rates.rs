//! Non-asymptotic bounds for the sequential averaging iterates.
//!
//! All bounds are in terms of `C = max{||x0 - x̃||, ||(I - S)x̃|| / (1 - β)}`
//! for a point `x̃` of the optimal set and `J = floor(2/(1 - β))`.

use crate::Vector;

/// `C` from the initial point, a reference point `x̃` and its image `S(x̃)`.
pub fn boundedness_radius(x0: &Vector, x_tilde: &Vector, s_of_x_tilde: &Vector, beta: f64) -> f64 {
    let start = (x0 - x_tilde).norm();
    let drift = (x_tilde - s_of_x_tilde).norm() / (1.0 - beta);
    start.max(drift)
}

/// `J = floor(2/(1 - β))`.
pub fn j_constant(beta: f64) -> u64 {
    (2.0 / (1.0 - beta)).floor() as u64
}

/// Bound on `||x^k - x^{k-1}||`.
pub fn step_residual_bound(c: f64, beta: f64, k: usize) -> f64 {
    let j = j_constant(beta) as f64;
    2.0 * c * j / ((1.0 - beta) * k as f64)
}

/// Bound on `||y^k - x^{k-1}||`.
pub fn map_residual_bound(c: f64, beta: f64, k: usize) -> f64 {
    let j = j_constant(beta) as f64;
    2.0 * c * (j + 2.0) / ((1.0 - beta) * k as f64)
}

/// Bound on `φ(y^k) - φ*` for BiG-SAM with inner step `t`.
pub fn inner_gap_bound(c: f64, beta: f64, t: f64, k: usize) -> f64 {
    let j = j_constant(beta) as f64;
    2.0 * c * c * (j + 2.0) / ((k as f64 + 1.0) * (1.0 - beta) * t)
}

/// `b_k = min{2/(γk), 1}`.
pub fn recursion_weight(gamma: f64, k: usize) -> f64 {
    (2.0 / (gamma * k as f64)).min(1.0)
}

/// Sequence generated with equality in
/// `a_{k+1} <= (1 - γ b_{k+1}) a_k + (b_k - b_{k+1}) c_k`, starting from `a_1`.
/// Returns `a_1, ..., a_{c.len()+1}`.
pub fn worst_case_recursion(gamma: f64, a1: f64, c: &[f64]) -> Vec<f64> {
    let mut a = Vec::with_capacity(c.len() + 1);
    a.push(a1);
    for (i, &ck) in c.iter().enumerate() {
        let k = i + 1;
        let bk = recursion_weight(gamma, k);
        let bk1 = recursion_weight(gamma, k + 1);
        let next = (1.0 - gamma * bk1) * a[i] + (bk - bk1) * ck;
        a.push(next);
    }
    a
}

/// `M J / (γ k)` with `J = floor(2/γ)`: the bound the recursion obeys when
/// `a_1 <= M` and every `c_k <= M`.
pub fn recursion_bound(gamma: f64, m: f64, k: usize) -> f64 {
    let j = (2.0 / gamma).floor();
    m * j / (gamma * k as f64)
}
