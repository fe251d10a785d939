#![allow(dead_code)]

use std::sync::Arc;

use bilevel_core::oracle::{solve_exact, OracleSolution};
use bilevel_core::problems::{
    add_noise, generate_rank_deficient_ls, quadratic_outer_from_operator, FirstDifferenceOperator,
};
use bilevel_core::{BilevelProblem, LeastSquaresInstance, OuterObjective, Quadratic};

pub struct Case {
    pub inst: LeastSquaresInstance,
    pub omega: Quadratic,
    pub problem: BilevelProblem,
    pub oracle: OracleSolution,
}

/// Rank-deficient noisy instance with the first-difference outer objective.
pub fn tiny_case(m: usize, n: usize, rank: usize, scale: f64, rho: f64, seed: u64) -> Case {
    let inst = generate_rank_deficient_ls(m, n, rank, 0.8, seed)
        .unwrap()
        .scale_rhs(scale);
    let inst = add_noise(&inst, rho, seed + 1000).unwrap();
    let omega = quadratic_outer_from_operator(&FirstDifferenceOperator::new(n).unwrap()).unwrap();
    let problem = inst
        .bilevel(OuterObjective::Smooth(Arc::new(omega.clone())))
        .unwrap();
    let oracle = solve_exact(&inst, &omega).unwrap();
    Case {
        inst,
        omega,
        problem,
        oracle,
    }
}
