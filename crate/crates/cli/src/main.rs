use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bilevel_cli::benchmark::{references, run_solver};
use bilevel_cli::config::{Method, ProblemSpec, RunConfig};
use bilevel_cli::error::{CliError, Result};
use bilevel_cli::output::{read_report_csv, read_trajectory_csv, write_report_csv, write_trajectory_csv};
use bilevel_cli::run_benchmark;
use bilevel_core::linalg::GramDecomposition;
use bilevel_core::oracle::{high_accuracy_reference, omega_lower_bound, solve_exact, DEFAULT_MU};
use bilevel_core::problems::io::{load_matrix, write_matrix_market, MatrixFormat};
use bilevel_core::Matrix;
use clap::{Args, Parser, Subcommand};

/// Bi-level convex least-squares solver and benchmark harness.
///
/// Every subcommand reads an optional TOML run configuration; flags override
/// its values. Output files go to the configured directory, else
/// $BILEVEL_OUTPUT_DIR, else the working directory.
#[derive(Debug, Parser)]
#[command(name = "bilevel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one solve and write its trajectory CSV.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV path (default: <output dir>/<problem>_trajectory.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the Monte-Carlo benchmark and write the report CSV.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Report CSV path (default: <output dir>/<problem>_report.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the inner and outer problems exactly (or bound them for large n).
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Write the minimal-norm solution as a MatrixMarket column.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a generated noisy instance as A.mtx, b.mtx and x_true.mtx.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Summarize a trajectory CSV, a report CSV or a matrix file.
    Inspect { path: PathBuf },
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Rows of the generated matrix.
    #[arg(long)]
    rows: Option<usize>,
    /// Columns of the generated matrix.
    #[arg(long)]
    cols: Option<usize>,
    /// Rank of the generated matrix.
    #[arg(long)]
    rank: Option<usize>,
    /// Singular value decay of the generated matrix.
    #[arg(long)]
    sv_decay: Option<f64>,
    /// Seed of the generated matrix.
    #[arg(long)]
    seed: Option<u64>,
    /// Matrix file (MatrixMarket or CSV); requires --rhs.
    #[arg(long, requires = "rhs")]
    matrix: Option<PathBuf>,
    /// Right-hand side file (one column).
    #[arg(long, requires = "matrix")]
    rhs: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<Method>,
    /// Comma-separated γ values.
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Inner step t.
    #[arg(long)]
    t: Option<f64>,
    /// Outer step s.
    #[arg(long)]
    s: Option<f64>,
    /// λ0 of the Tikhonov schedule λ_k = λ0/k.
    #[arg(long)]
    lambda0: Option<f64>,
    /// Comma-separated noise levels ρ.
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    #[arg(long)]
    replications: Option<usize>,
    /// Base noise seed; replication r uses seed + r.
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Relative feasibility gap target; 0 disables the gap rule.
    #[arg(long)]
    relative_gap: Option<f64>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Wall-clock limit per run in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
    #[arg(long)]
    residual_tol: Option<f64>,
    /// Keep every n-th iteration in trajectories.
    #[arg(long)]
    record_every: Option<usize>,
    /// Worker threads for benchmark replications.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Also write per-run trajectories from `benchmark`.
    #[arg(long)]
    trajectories: bool,
    /// Output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let (Some(a), Some(b)) = (&self.matrix, &self.rhs) {
            cfg.problem = ProblemSpec::Files {
                a: a.clone(),
                b: b.clone(),
            };
        }
        let touches_generator = self.rows.is_some()
            || self.cols.is_some()
            || self.rank.is_some()
            || self.sv_decay.is_some()
            || self.seed.is_some();
        if touches_generator {
            if self.matrix.is_some() {
                return Err(CliError::config(
                    "generator flags cannot be combined with --matrix/--rhs",
                ));
            }
            if matches!(cfg.problem, ProblemSpec::Files { .. }) {
                cfg.problem = ProblemSpec::default();
            }
            if let ProblemSpec::Generated {
                rows,
                cols,
                rank,
                sv_decay,
                seed,
                ..
            } = &mut cfg.problem
            {
                set(rows, self.rows);
                set(cols, self.cols);
                set(rank, self.rank);
                set(sv_decay, self.sv_decay);
                set(seed, self.seed);
            }
        }
        set(&mut cfg.solver.method, self.method);
        if !self.gamma.is_empty() {
            cfg.solver.gammas = self.gamma.clone();
        }
        if self.t.is_some() {
            cfg.solver.t = self.t;
        }
        if self.s.is_some() {
            cfg.solver.s = self.s;
        }
        set(&mut cfg.solver.lambda0, self.lambda0);
        if !self.rho.is_empty() {
            cfg.noise.rhos = self.rho.clone();
        }
        set(&mut cfg.noise.replications, self.replications);
        set(&mut cfg.noise.seed, self.noise_seed);
        if self.relative_gap.is_some() {
            cfg.stopping.relative_gap = self.relative_gap;
        }
        set(&mut cfg.stopping.max_iterations, self.max_iterations);
        if self.time_limit.is_some() {
            cfg.stopping.time_limit_seconds = self.time_limit;
        }
        set(&mut cfg.stopping.residual_tol, self.residual_tol);
        set(&mut cfg.output.record_every, self.record_every);
        set(&mut cfg.output.parallelism, self.parallelism);
        cfg.output.trajectories |= self.trajectories;
        if self.output_dir.is_some() {
            cfg.output.directory = self.output_dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Solve { common, out } => solve(&common.load()?, out),
        Command::Benchmark { common, out } => benchmark(&common.load()?, out),
        Command::Oracle { common, out } => oracle(&common.load()?, out),
        Command::Generate { common } => generate(&common.load()?),
        Command::Inspect { path } => inspect(&path),
    }
}

fn solve(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let base = cfg.base_instance()?;
    let inst = cfg.instance(&base, cfg.noise.rhos[0], 0)?;
    let outer = cfg.outer(inst.cols())?;
    let problem = inst.bilevel(outer.objective.clone())?;
    let refs = if cfg.gap_rule().is_some() || inst.cols() <= cfg.reference.exact_max_dim
    {
        Some(references(cfg, &inst, &outer, &problem)?)
    } else {
        None
    };
    let gamma = cfg.solver.gammas[0];
    let traj = run_solver(cfg, &problem, &outer, gamma, refs.as_ref().map(|r| r.phi_star))?;
    let path = out.unwrap_or_else(|| {
        cfg.output_dir()
            .join(format!("{}_trajectory.csv", cfg.problem_id()))
    });
    let x_mn = refs.as_ref().and_then(|r| r.x_mn.as_ref());
    write_trajectory_csv(&path, &traj, x_mn, Some(&cfg.preamble()))?;
    let last = traj.last();
    println!("termination      {}", traj.termination);
    println!("iterations       {}", traj.iterations);
    println!("phi(y)           {:.12e}", last.phi_y);
    println!("omega(y)         {:.12e}", last.omega_y);
    if let Some(r) = &refs {
        println!("phi*             {:.12e}", r.phi_star);
        if let Some(w) = r.omega_star {
            let label = if r.omega_is_bound { "omega* (bound)  " } else { "omega*          " };
            println!("{label} {w:.12e}");
        }
        if let Some(x) = &r.x_mn {
            println!("distance to x_mn {:.6e}", (traj.solution() - x).norm());
        }
    }
    println!("trajectory       {}", path.display());
    Ok(())
}

fn benchmark(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let report = run_benchmark(cfg)?;
    let path = out.unwrap_or_else(|| cfg.output_dir().join(format!("{}_report.csv", cfg.problem_id())));
    write_report_csv(&path, &report, Some(&cfg.preamble()))?;
    println!(
        "{:>10} {:>6} {:>5} {:>12} {:>12} {:>12} {:>9} {:>7}",
        "rho", "gamma", "runs", "iterations", "rfg", "rog", "at_limit", "failed"
    );
    for a in &report.aggregates {
        println!(
            "{:>10.3e} {:>6} {:>5} {:>12.1} {:>12.4e} {:>12.4e} {:>9} {:>7}",
            a.rho, a.gamma, a.runs, a.mean_iterations, a.mean_rfg, a.mean_rog, a.at_limit, a.failed
        );
    }
    for r in report.rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "failed: rho={} gamma={} rep={}: {}",
            r.rho,
            r.gamma,
            r.replication,
            r.error.as_deref().unwrap_or_default()
        );
    }
    println!("report {}", path.display());
    Ok(())
}

fn oracle(cfg: &RunConfig, out: Option<PathBuf>) -> Result<()> {
    let base = cfg.base_instance()?;
    let inst = cfg.instance(&base, cfg.noise.rhos[0], 0)?;
    let outer = cfg.outer(inst.cols())?;
    if inst.cols() <= cfg.reference.exact_max_dim {
        let sol = solve_exact(&inst, &outer.on_orthant)?;
        let set = &sol.solution_set;
        println!("method           active-set enumeration");
        println!("phi*             {:.16e}", sol.phi_star);
        println!("omega*           {:.16e}", sol.omega_star);
        println!("x_mn             {:?}", sol.x_mn.as_slice());
        println!("zero coordinates {:?}", set.zero);
        println!("affine dimension {}", set.affine_dimension());
        println!("vertices         {}", set.vertices.len());
        println!("bounded          {}", set.is_bounded());
        if let Some(path) = out {
            write_matrix_market(&path, &Matrix::from_column_slice(sol.x_mn.len(), 1, sol.x_mn.as_slice()))?;
        }
    } else {
        let problem = inst.bilevel(outer.objective.clone())?;
        let r = high_accuracy_reference(&problem, cfg.reference.budget, cfg.reference.residual_tol)?;
        let lb = omega_lower_bound(&inst, &outer.on_orthant, r.phi, DEFAULT_MU, cfg.reference.budget)?;
        println!("method           proximal gradient reference");
        println!("phi*             {:.16e}", r.phi);
        println!("residual         {:.3e} after {} iterations", r.residual, r.iterations);
        println!("omega* >=        {:.16e}", lb.value);
        println!("bound gap        {:.3e}", lb.upper - lb.value);
        if out.is_some() {
            return Err(CliError::config("--out needs an instance small enough for exact enumeration"));
        }
    }
    Ok(())
}

fn generate(cfg: &RunConfig) -> Result<()> {
    let base = cfg.base_instance()?;
    let inst = cfg.instance(&base, cfg.noise.rhos[0], 0)?;
    let dir = cfg.output_dir();
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let column = |v: &bilevel_core::Vector| Matrix::from_column_slice(v.len(), 1, v.as_slice());
    write_matrix_market(&dir.join("A.mtx"), &inst.a)?;
    write_matrix_market(&dir.join("b.mtx"), &column(&inst.b))?;
    if let Some(x) = &inst.x_true {
        write_matrix_market(&dir.join("x_true.mtx"), &column(x))?;
    }
    println!("wrote {}x{} instance to {}", inst.rows(), inst.cols(), dir.display());
    Ok(())
}

fn first_data_line(path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(text
        .lines()
        .find(|l| !l.starts_with('#') && !l.trim().is_empty())
        .unwrap_or_default()
        .to_owned())
}

fn inspect(path: &Path) -> Result<()> {
    let format = MatrixFormat::from_path(path);
    let header = if format == Some(MatrixFormat::Csv) {
        first_data_line(path)?
    } else {
        String::new()
    };
    if header.starts_with("k,") {
        let rows = read_trajectory_csv(path)?;
        println!("trajectory with {} records", rows.len());
        if let Some(last) = rows.last() {
            println!("last k           {}", last.k);
            println!("phi(y)           {:.12e}", last.phi_y);
            println!("omega(y)         {:.12e}", last.omega_y);
            println!("step residual    {:.3e}", last.step_residual);
            println!("map residual     {:.3e}", last.map_residual);
            println!("elapsed seconds  {:.3}", last.elapsed_seconds);
            if let Some(d) = last.distance {
                println!("distance to x_mn {d:.6e}");
            }
        }
    } else if header.starts_with("kind,") {
        let rows = read_report_csv(path)?;
        let runs = rows.iter().filter(|r| r[0] == "run").count();
        let failed = rows.iter().filter(|r| r[0] == "run" && r[15] == "1").count();
        println!("benchmark report with {runs} runs ({failed} failed)");
        for r in rows.iter().filter(|r| r[0] == "mean") {
            println!(
                "rho={} gamma={} mean iterations={} mean rfg={} at limit={}",
                r[2], r[3], r[6], r[8], r[14]
            );
        }
    } else {
        let format = format.ok_or_else(|| {
            CliError::config(format!("{}: unknown file type", path.display()))
        })?;
        let m = load_matrix(path, format)?;
        let sv = GramDecomposition::new(&m).singular_values();
        println!("matrix {}x{}", m.nrows(), m.ncols());
        println!("rank             {}", GramDecomposition::new(&m).rank());
        if let (Some(max), Some(min)) = (sv.first(), sv.iter().rev().find(|&&s| s > 0.0)) {
            println!("largest sv       {max:.6e}");
            println!("smallest nonzero {min:.6e}");
        }
    }
    Ok(())
}
