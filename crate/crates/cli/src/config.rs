//! Run configuration read from TOML, with defaults for every field.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use bilevel_core::functions::ElasticNet;
use bilevel_core::problems::io::load_system;
use bilevel_core::problems::{
    add_noise, generate_rank_deficient_ls, quadratic_outer_from_operator, FirstDifferenceOperator,
};
use bilevel_core::solver::GAMMA_PRESETS;
use bilevel_core::{
    LambdaSchedule, LeastSquaresInstance, Matrix, OuterObjective, Quadratic, SolveConfig, Vector,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "BILEVEL_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub outer: OuterSpec,
    pub solver: SolverSpec,
    pub noise: NoiseSpec,
    pub stopping: StoppingSpec,
    pub reference: ReferenceSpec,
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemSpec {
    Generated {
        rows: usize,
        cols: usize,
        rank: usize,
        #[serde(default = "default_sv_decay")]
        sv_decay: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default = "one")]
        rhs_scale: f64,
    },
    Files {
        a: PathBuf,
        b: PathBuf,
    },
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::Generated {
            rows: 8,
            cols: 6,
            rank: 3,
            sv_decay: default_sv_decay(),
            seed: 0,
            rhs_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OuterSpec {
    /// `½ xᵀ(DᵀD + I)x` with `D` the first-difference operator.
    FirstDifference,
    /// `½ σ ||x||²`.
    Identity {
        #[serde(default = "one")]
        sigma: f64,
    },
    /// `½ σ ||x||² + w ||x||₁`, handled through its prox with smoothing
    /// `s = 2δ/ℓ²` and `ℓ` taken over `[-radius, radius]ⁿ`.
    ElasticNet {
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "one")]
        weight: f64,
        radius: f64,
        #[serde(default = "default_delta")]
        delta: f64,
    },
}

impl Default for OuterSpec {
    fn default() -> Self {
        OuterSpec::FirstDifference
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Bigsam,
    Tikhonov,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub method: Method,
    pub gammas: Vec<f64>,
    pub t: Option<f64>,
    pub s: Option<f64>,
    /// `λ_k = lambda0 / k` for the Tikhonov baseline.
    pub lambda0: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            method: Method::Bigsam,
            gammas: GAMMA_PRESETS.to_vec(),
            t: None,
            s: None,
            lambda0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub rhos: Vec<f64>,
    pub replications: usize,
    /// Replication `r` draws its noise from `seed + r`.
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            rhos: vec![1e-2],
            replications: 1,
            seed: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StoppingSpec {
    /// Stop once `(φ(y^k) - φ*)/φ*` drops below this; zero-residual instances
    /// use it as an absolute gap instead. `0` disables the rule.
    pub relative_gap: Option<f64>,
    pub residual_tol: f64,
    pub max_iterations: usize,
    pub time_limit_seconds: Option<f64>,
}

impl Default for StoppingSpec {
    fn default() -> Self {
        Self {
            relative_gap: Some(1e-2),
            residual_tol: 0.0,
            max_iterations: 1_000_000,
            time_limit_seconds: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Largest dimension solved by exact enumeration.
    pub exact_max_dim: usize,
    /// Iteration budget of the high-accuracy reference solve.
    pub budget: usize,
    pub residual_tol: f64,
    /// Compute a lower bound on `ω*` for instances beyond `exact_max_dim`.
    pub omega_lower_bound: bool,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            exact_max_dim: bilevel_core::oracle::MAX_ENUMERATION_DIM,
            budget: 2_000_000,
            residual_tol: 1e-12,
            omega_lower_bound: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Falls back to `$BILEVEL_OUTPUT_DIR`, then the working directory.
    pub directory: Option<PathBuf>,
    pub record_every: usize,
    /// Also write one trajectory CSV per benchmark run.
    pub trajectories: bool,
    /// Worker threads for replications.
    pub parallelism: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            directory: None,
            record_every: 1,
            trajectories: false,
            parallelism: 1,
        }
    }
}

fn default_sv_decay() -> f64 {
    0.8
}

fn default_delta() -> f64 {
    1e-2
}

fn one() -> f64 {
    1.0
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configuration serializes")
    }

    /// The effective configuration as `#`-prefixed lines, written at the top
    /// of every output file.
    pub fn preamble(&self) -> String {
        self.to_toml()
            .lines()
            .map(|l| format!("# {l}\n"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match &self.problem {
            ProblemSpec::Generated {
                rows,
                cols,
                rank,
                sv_decay,
                rhs_scale,
                ..
            } => {
                if *rows == 0 || *cols == 0 {
                    return Err(CliError::config("problem dimensions must be positive"));
                }
                if *rank == 0 || *rank > (*rows).min(*cols) {
                    return Err(CliError::config(format!(
                        "rank must lie in 1..={}, got {rank}",
                        rows.min(cols)
                    )));
                }
                if !(*sv_decay > 0.0 && *sv_decay <= 1.0) {
                    return Err(CliError::config("sv_decay must lie in (0, 1]"));
                }
                positive("rhs_scale", *rhs_scale)?;
            }
            ProblemSpec::Files { .. } => {}
        }
        match &self.outer {
            OuterSpec::FirstDifference => {
                if self.dim().is_some_and(|n| n < 2) {
                    return Err(CliError::config("first-difference outer needs n >= 2"));
                }
            }
            OuterSpec::Identity { sigma } => positive("outer.sigma", *sigma)?,
            OuterSpec::ElasticNet {
                sigma,
                weight,
                radius,
                delta,
            } => {
                positive("outer.sigma", *sigma)?;
                positive("outer.radius", *radius)?;
                positive("outer.delta", *delta)?;
                if !(*weight >= 0.0 && weight.is_finite()) {
                    return Err(CliError::config("outer.weight must be nonnegative"));
                }
                if self.solver.method == Method::Tikhonov {
                    return Err(CliError::config(
                        "the tikhonov baseline needs a smooth outer objective",
                    ));
                }
            }
        }
        if self.solver.gammas.is_empty() {
            return Err(CliError::config("solver.gammas must not be empty"));
        }
        for &g in &self.solver.gammas {
            if !(g > 0.0 && g <= 1.0) {
                return Err(CliError::config(format!("gamma must lie in (0, 1], got {g}")));
            }
        }
        if let Some(t) = self.solver.t {
            positive("solver.t", t)?;
        }
        if let Some(s) = self.solver.s {
            positive("solver.s", s)?;
        }
        if !(self.solver.lambda0 > 0.0 && self.solver.lambda0.is_finite()) {
            return Err(CliError::config("solver.lambda0 must be positive"));
        }
        if self.noise.rhos.is_empty() {
            return Err(CliError::config("noise.rhos must not be empty"));
        }
        for &rho in &self.noise.rhos {
            if !(rho >= 0.0 && rho.is_finite()) {
                return Err(CliError::config(format!("noise level must be nonnegative, got {rho}")));
            }
        }
        if self.noise.replications == 0 {
            return Err(CliError::config("noise.replications must be positive"));
        }
        if let Some(g) = self.stopping.relative_gap {
            if !(g >= 0.0 && g.is_finite()) {
                return Err(CliError::config("stopping.relative_gap must be nonnegative"));
            }
        }
        if !(self.stopping.residual_tol >= 0.0) {
            return Err(CliError::config("stopping.residual_tol must be nonnegative"));
        }
        if self.stopping.max_iterations == 0 {
            return Err(CliError::config("stopping.max_iterations must be positive"));
        }
        if let Some(limit) = self.stopping.time_limit_seconds {
            if !(limit >= 0.0 && limit.is_finite()) {
                return Err(CliError::config("stopping.time_limit_seconds must be nonnegative"));
            }
        }
        if self.reference.budget == 0 {
            return Err(CliError::config("reference.budget must be positive"));
        }
        if self.output.record_every == 0 {
            return Err(CliError::config("output.record_every must be positive"));
        }
        if self.output.parallelism == 0 {
            return Err(CliError::config("output.parallelism must be positive"));
        }
        Ok(())
    }

    /// Problem dimension when known without reading files.
    pub fn dim(&self) -> Option<usize> {
        match self.problem {
            ProblemSpec::Generated { cols, .. } => Some(cols),
            ProblemSpec::Files { .. } => None,
        }
    }

    /// Output directory: the configured one, then `$BILEVEL_OUTPUT_DIR`, then `.`.
    pub fn output_dir(&self) -> PathBuf {
        self.output
            .directory
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }

    /// Short identifier of the problem used in report rows and file names.
    pub fn problem_id(&self) -> String {
        match &self.problem {
            ProblemSpec::Generated {
                rows,
                cols,
                rank,
                seed,
                ..
            } => format!("gen-{rows}x{cols}-r{rank}-s{seed}"),
            ProblemSpec::Files { a, .. } => a
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "files".into()),
        }
    }

    /// The noiseless instance.
    pub fn base_instance(&self) -> Result<LeastSquaresInstance> {
        match &self.problem {
            ProblemSpec::Generated {
                rows,
                cols,
                rank,
                sv_decay,
                seed,
                rhs_scale,
            } => Ok(generate_rank_deficient_ls(*rows, *cols, *rank, *sv_decay, *seed)?
                .scale_rhs(*rhs_scale)),
            ProblemSpec::Files { a, b } => {
                let (a, b) = load_system(a, b)?;
                Ok(LeastSquaresInstance::new(a, b)?)
            }
        }
    }

    /// Instance for noise level `rho` and replication `rep`.
    pub fn instance(
        &self,
        base: &LeastSquaresInstance,
        rho: f64,
        rep: usize,
    ) -> Result<LeastSquaresInstance> {
        Ok(add_noise(base, rho, self.noise_seed(rep))?)
    }

    pub fn noise_seed(&self, rep: usize) -> u64 {
        self.noise.seed + rep as u64
    }

    /// The outer objective and the quadratic it agrees with on the
    /// nonnegative orthant, used by the oracle.
    pub fn outer(&self, n: usize) -> Result<Outer> {
        match &self.outer {
            OuterSpec::FirstDifference => {
                let q = quadratic_outer_from_operator(&FirstDifferenceOperator::new(n)?)?;
                Ok(Outer::smooth(q))
            }
            OuterSpec::Identity { sigma } => Ok(Outer::smooth(Quadratic::scaled_identity(n, *sigma)?)),
            OuterSpec::ElasticNet {
                sigma,
                weight,
                radius,
                delta,
            } => {
                let net = ElasticNet::new(n, *sigma, *weight)?;
                let ell = net.lipschitz_on_box(*radius);
                let objective = OuterObjective::Nonsmooth(net.into_outer(*radius)?);
                let on_orthant =
                    Quadratic::new(Matrix::identity(n, n) * *sigma, Vector::from_element(n, *weight))?;
                Ok(Outer {
                    objective,
                    on_orthant,
                    smoothing: Some(bilevel_core::solver::smoothing_parameter(*delta, ell)),
                })
            }
        }
    }

    pub fn lambda_schedule(&self) -> LambdaSchedule {
        LambdaSchedule::Harmonic {
            lambda0: self.solver.lambda0,
        }
    }

    /// Solver parameters for one run. `phi_star` enables the gap rule.
    /// The gap target, `None` when disabled.
    pub fn gap_rule(&self) -> Option<f64> {
        self.stopping.relative_gap.filter(|&g| g > 0.0)
    }

    pub fn solve_config(&self, gamma: f64, outer: &Outer, phi_star: Option<f64>) -> SolveConfig {
        let mut cfg = SolveConfig {
            t: self.solver.t,
            s: self.solver.s.or(outer.smoothing),
            gamma,
            max_iterations: self.stopping.max_iterations,
            residual_tol: self.stopping.residual_tol,
            time_limit: self.stopping.time_limit_seconds.map(Duration::from_secs_f64),
            record_every: self.output.record_every,
            ..SolveConfig::default()
        };
        if let (Some(tol), Some(phi)) = (self.gap_rule(), phi_star) {
            cfg.phi_star = Some(phi);
            if phi > 0.0 {
                cfg.relative_gap_tol = Some(tol);
            } else {
                cfg.absolute_gap_tol = Some(tol);
            }
        }
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct Outer {
    pub objective: OuterObjective,
    pub on_orthant: Quadratic,
    /// Smoothing parameter for a nonsmooth objective.
    pub smoothing: Option<f64>,
}

impl Outer {
    fn smooth(q: Quadratic) -> Self {
        Self {
            objective: OuterObjective::Smooth(Arc::new(q.clone())),
            on_orthant: q,
            smoothing: None,
        }
    }
}
