//! Shared fixtures for the criterion benchmarks.

use std::sync::Arc;

use bilevel_core::problems::{
    add_noise, generate_rank_deficient_ls, quadratic_outer_from_operator, FirstDifferenceOperator,
};
use bilevel_core::{BilevelProblem, LeastSquaresInstance, OuterObjective, Quadratic};

/// Noisy rank-deficient least squares of size `n x n` with rank `n/2`.
pub fn instance(n: usize, seed: u64) -> LeastSquaresInstance {
    let inst = generate_rank_deficient_ls(n, n, (n / 2).max(1), 0.95, seed).unwrap();
    add_noise(&inst, 1e-2, seed + 1000).unwrap()
}

pub fn first_difference(n: usize) -> Quadratic {
    quadratic_outer_from_operator(&FirstDifferenceOperator::new(n).unwrap()).unwrap()
}

/// Instance paired with the first-difference outer objective.
pub fn problem(n: usize, seed: u64) -> (LeastSquaresInstance, BilevelProblem) {
    let inst = instance(n, seed);
    let p = inst
        .bilevel(OuterObjective::Smooth(Arc::new(first_difference(n))))
        .unwrap();
    (inst, p)
}
