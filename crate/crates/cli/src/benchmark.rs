//! Monte-Carlo benchmark over noise levels, `γ` values and replications.

use bilevel_core::oracle::{
    high_accuracy_reference, omega_lower_bound, solve_exact, DEFAULT_MU,
};
use bilevel_core::{
    bigsam_run, tikhonov_baseline_run, BilevelProblem, LeastSquaresInstance, Trajectory,
    Vector,
};
use rayon::prelude::*;

use crate::config::{Method, Outer, RunConfig};
use crate::error::{CliError, Result};
use crate::metrics::{metric_rfg, metric_rog};
use crate::output::write_trajectory_csv;

/// Reference values for one noisy instance.
#[derive(Debug, Clone)]
pub struct References {
    pub phi_star: f64,
    /// `ω*`, or a lower bound on it when `omega_is_bound` is set.
    pub omega_star: Option<f64>,
    pub omega_is_bound: bool,
    /// Minimal-norm solution, available from the exact oracle.
    pub x_mn: Option<Vector>,
}

/// Exact enumeration up to `reference.exact_max_dim`, a long proximal
/// gradient run and a dual lower bound on `ω*` beyond it.
pub fn references(
    cfg: &RunConfig,
    inst: &LeastSquaresInstance,
    outer: &Outer,
    problem: &BilevelProblem,
) -> Result<References> {
    if inst.cols() <= cfg.reference.exact_max_dim {
        let exact = solve_exact(inst, &outer.on_orthant)?;
        return Ok(References {
            phi_star: exact.phi_star,
            omega_star: Some(exact.omega_star),
            omega_is_bound: false,
            x_mn: Some(exact.x_mn),
        });
    }
    let r = high_accuracy_reference(problem, cfg.reference.budget, cfg.reference.residual_tol)?;
    let omega_star = if cfg.reference.omega_lower_bound {
        let lb = omega_lower_bound(inst, &outer.on_orthant, r.phi, DEFAULT_MU, cfg.reference.budget)?;
        Some(lb.value)
    } else {
        None
    };
    Ok(References {
        phi_star: r.phi,
        omega_star,
        omega_is_bound: true,
        x_mn: None,
    })
}

/// Runs the configured solver with step `γ`, stopping on the gap rule when
/// `phi_star` is known.
pub fn run_solver(
    cfg: &RunConfig,
    problem: &BilevelProblem,
    outer: &Outer,
    gamma: f64,
    phi_star: Option<f64>,
) -> Result<Trajectory> {
    let sc = cfg.solve_config(gamma, outer, phi_star);
    let traj = match cfg.solver.method {
        Method::Bigsam => bigsam_run(problem, &sc)?,
        Method::Tikhonov => tikhonov_baseline_run(problem, &cfg.lambda_schedule(), &sc)?,
    };
    Ok(traj)
}

/// One solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub problem_id: String,
    pub rho: f64,
    pub gamma: f64,
    pub replication: usize,
    pub seed: u64,
    pub iterations: Option<usize>,
    pub elapsed_seconds: Option<f64>,
    /// Absent when `φ* = 0`; see `phi_gap`.
    pub rfg: Option<f64>,
    pub rog: Option<f64>,
    pub rog_absolute: bool,
    /// `φ(y^k) - φ*`.
    pub phi_gap: Option<f64>,
    pub termination: Option<String>,
    pub error: Option<String>,
}

impl RunRow {
    pub fn at_limit(&self) -> bool {
        matches!(
            self.termination.as_deref(),
            Some("max-iterations") | Some("time-limit")
        )
    }

    /// The row with its wall-clock column cleared.
    pub fn without_timing(&self) -> Self {
        Self {
            elapsed_seconds: None,
            ..self.clone()
        }
    }
}

/// Means over the successful runs of one `(problem, ρ, γ)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub problem_id: String,
    pub rho: f64,
    pub gamma: f64,
    pub runs: usize,
    pub failed: usize,
    /// Runs stopped by the iteration or time limit.
    pub at_limit: usize,
    pub mean_iterations: f64,
    pub mean_elapsed_seconds: f64,
    pub mean_rfg: f64,
    pub mean_rog: f64,
    pub mean_phi_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BenchmarkReport {
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<AggregateRow>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

impl BenchmarkReport {
    /// Builds the aggregate rows from `rows`, one per `(problem, ρ, γ)` in
    /// order of first appearance.
    pub fn from_rows(rows: Vec<RunRow>) -> Self {
        let mut cells: Vec<(String, f64, f64)> = Vec::new();
        for r in &rows {
            let key = (r.problem_id.clone(), r.rho, r.gamma);
            if !cells.contains(&key) {
                cells.push(key);
            }
        }
        let aggregates = cells
            .into_iter()
            .map(|(problem_id, rho, gamma)| {
                let members: Vec<&RunRow> = rows
                    .iter()
                    .filter(|r| r.problem_id == problem_id && r.rho == rho && r.gamma == gamma)
                    .collect();
                let ok: Vec<&&RunRow> = members.iter().filter(|r| r.error.is_none()).collect();
                AggregateRow {
                    problem_id,
                    rho,
                    gamma,
                    runs: members.len(),
                    failed: members.len() - ok.len(),
                    at_limit: members.iter().filter(|r| r.at_limit()).count(),
                    mean_iterations: mean(ok.iter().filter_map(|r| r.iterations.map(|i| i as f64))),
                    mean_elapsed_seconds: mean(ok.iter().filter_map(|r| r.elapsed_seconds)),
                    mean_rfg: mean(ok.iter().filter_map(|r| r.rfg)),
                    mean_rog: mean(ok.iter().filter_map(|r| r.rog)),
                    mean_phi_gap: mean(ok.iter().filter_map(|r| r.phi_gap)),
                }
            })
            .collect();
        Self { rows, aggregates }
    }
}

fn trajectory_file_name(id: &str, rho: f64, gamma: f64, rep: usize) -> String {
    format!("{id}_rho{rho}_gamma{gamma}_rep{rep}.csv")
}

/// Everything for one `(ρ, replication)` pair: the noisy instance, its
/// references and one run per `γ`.
fn run_group(
    cfg: &RunConfig,
    base: &LeastSquaresInstance,
    outer: &Outer,
    rho: f64,
    rep: usize,
) -> Vec<RunRow> {
    let id = cfg.problem_id();
    let seed = cfg.noise_seed(rep);
    let blank = |gamma: f64| RunRow {
        problem_id: id.clone(),
        rho,
        gamma,
        replication: rep,
        seed,
        iterations: None,
        elapsed_seconds: None,
        rfg: None,
        rog: None,
        rog_absolute: false,
        phi_gap: None,
        termination: None,
        error: None,
    };
    let prepared = cfg.instance(base, rho, rep).and_then(|inst| {
        let problem = inst.bilevel(outer.objective.clone())?;
        let refs = references(cfg, &inst, outer, &problem)?;
        Ok((problem, refs))
    });
    let (problem, refs) = match prepared {
        Ok(p) => p,
        Err(e) => {
            return cfg
                .solver
                .gammas
                .iter()
                .map(|&g| RunRow {
                    error: Some(e.to_string()),
                    ..blank(g)
                })
                .collect()
        }
    };
    cfg.solver
        .gammas
        .iter()
        .map(|&gamma| {
            let mut row = blank(gamma);
            match run_solver(cfg, &problem, outer, gamma, Some(refs.phi_star)) {
                Ok(traj) => {
                    let last = traj.last();
                    row.iterations = Some(traj.iterations);
                    row.elapsed_seconds = Some(last.elapsed.as_secs_f64());
                    row.rfg = metric_rfg(last.phi_y, refs.phi_star).ok();
                    row.phi_gap = Some(last.phi_y - refs.phi_star);
                    if let Some(w) = refs.omega_star {
                        let rog = metric_rog(last.omega_y, w);
                        row.rog = Some(rog.value);
                        row.rog_absolute = rog.absolute;
                    }
                    row.termination = Some(traj.termination.to_string());
                    if cfg.output.trajectories {
                        let path = cfg
                            .output_dir()
                            .join(trajectory_file_name(&row.problem_id, rho, gamma, rep));
                        let preamble = cfg.preamble();
                        if let Err(e) =
                            write_trajectory_csv(&path, &traj, refs.x_mn.as_ref(), Some(&preamble))
                        {
                            row.error = Some(e.to_string());
                        }
                    }
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect()
}

/// Runs every `(ρ, γ, replication)` combination of `cfg`. Replications are
/// spread over `output.parallelism` worker threads; rows come back in
/// `(ρ, replication, γ)` order regardless.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let base = cfg.base_instance()?;
    let outer = cfg.outer(base.cols())?;
    let groups: Vec<(f64, usize)> = cfg
        .noise
        .rhos
        .iter()
        .flat_map(|&rho| (0..cfg.noise.replications).map(move |rep| (rho, rep)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.output.parallelism)
        .build()
        .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))?;
    let rows: Vec<RunRow> = pool.install(|| {
        groups
            .par_iter()
            .map(|&(rho, rep)| run_group(cfg, &base, &outer, rho, rep))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    });
    Ok(BenchmarkReport::from_rows(rows))
}
