mod common;

use bilevel_core::mappings::{BoundContraction, Mapping};
use bilevel_core::solver::rates::{
    boundedness_radius, inner_gap_bound, map_residual_bound, recursion_bound, step_residual_bound,
    worst_case_recursion,
};
use bilevel_core::solver::BigSamOperators;
use bilevel_core::{bigsam_run, AlphaSchedule, SolveConfig, Vector};
use common::tiny_case;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_bounds(case: &common::Case, cfg: &SolveConfig) {
    let ops = BigSamOperators::new(&case.problem, cfg).unwrap();
    let beta = ops.schedule.beta();
    let x_mn = &case.oracle.x_mn;
    let s_map: &BoundContraction = &ops.s_map;
    let c = boundedness_radius(&Vector::zeros(x_mn.len()), x_mn, &s_map.apply(x_mn), beta);
    let traj = bigsam_run(&case.problem, cfg).unwrap();
    let mut prev = Vector::zeros(x_mn.len());
    for r in &traj.records {
        let step = (&r.x - &prev).norm();
        assert_eq!(step, r.step_residual);
        assert!(step <= step_residual_bound(c, beta, r.k) + 1e-9, "k={}", r.k);
        assert!(r.map_residual <= map_residual_bound(c, beta, r.k) + 1e-9, "k={}", r.k);
        let gap = r.phi_y - case.oracle.phi_star;
        assert!(gap <= inner_gap_bound(c, beta, traj.t, r.k) + 1e-9, "k={}", r.k);
        prev = r.x.clone();
    }
}

#[test]
fn rate_bounds_hold_along_unit_scale_runs() {
    for seed in 0..5 {
        let case = tiny_case(6, 5, 2, 1.0, 0.05, seed);
        let cfg = SolveConfig {
            max_iterations: 5000,
            residual_tol: 0.0,
            ..Default::default()
        };
        check_bounds(&case, &cfg);
    }
}

#[test]
fn rate_bounds_hold_for_smaller_gamma_and_steps() {
    // the bounds are stated for γ = 1 but remain valid for γ in (0, 1]
    for (seed, gamma) in [(1, 0.1), (2, 0.5)] {
        let case = tiny_case(4, 6, 2, 1.0, 0.05, seed);
        let lf = case.inst.lipschitz();
        let cfg = SolveConfig {
            gamma,
            t: Some(0.5 / lf),
            s: Some(0.1),
            max_iterations: 5000,
            residual_tol: 0.0,
            ..Default::default()
        };
        check_bounds(&case, &cfg);
    }
}

#[test]
fn recursion_bound_on_random_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let gamma: f64 = rng.random_range(0.01..=1.0);
        let m: f64 = rng.random_range(0.1..10.0);
        let c: Vec<f64> = (0..5000).map(|_| rng.random_range(0.0..=m)).collect();
        let a = worst_case_recursion(gamma, rng.random_range(0.0..=m), &c);
        for (i, &ak) in a.iter().enumerate() {
            assert!(ak >= 0.0);
            assert!(ak <= recursion_bound(gamma, m, i + 1) * (1.0 + 1e-12));
        }
    }
}

#[test]
fn alpha_schedule_matches_averaging_weights_in_records() {
    let case = tiny_case(4, 6, 2, 1.0, 0.05, 3);
    let cfg = SolveConfig {
        max_iterations: 100,
        ..Default::default()
    };
    let traj = bigsam_run(&case.problem, &cfg).unwrap();
    let sched = AlphaSchedule::new(1.0, traj.beta).unwrap();
    for r in &traj.records {
        assert_eq!(r.alpha, sched.alpha(r.k));
    }
}
