//! Sequential averaging methods for simple convex bi-level problems
//!
//! ```text
//! min ω(x)  subject to  x ∈ argmin { f(y) + g(y) }
//! ```
//!
//! with `ω` strongly convex. The inner problem enters only through its
//! proximal gradient map, the outer one through a gradient step or a proximal
//! step. Small nonnegative least-squares instances can be solved exactly by
//! [`oracle`] for testing and benchmarking.

pub mod error;
pub mod functions;
pub mod linalg;
pub mod mappings;
pub mod oracle;
pub mod problems;
pub mod solver;

pub type Vector = nalgebra::DVector<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;

pub use error::{Error, Result};
pub use functions::{
    ConvexFunction, ElasticNet, LeastSquares, MoreauEnvelope, NonnegativeOrthant,
    NonsmoothOuter, OuterObjective, ProxFunction, Quadratic, SmoothFunction,
};
pub use mappings::{Mapping, OuterContraction, ProxGradMapping};
pub use oracle::{OracleMethod, OracleSolution, SolutionSet};
pub use problems::{BilevelProblem, LeastSquaresInstance};
pub use solver::{
    bigsam_run, sam_run, tikhonov_baseline_run, AlphaSchedule, IterationRecord, LambdaSchedule,
    SolveConfig, Termination, Trajectory,
};
