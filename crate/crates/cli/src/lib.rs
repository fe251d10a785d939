//! Configuration, metrics, benchmark harness and CSV output behind the
//! `bilevel` command.

pub mod benchmark;
pub mod config;
pub mod error;
pub mod metrics;
pub mod output;

pub use benchmark::{run_benchmark, AggregateRow, BenchmarkReport, References, RunRow};
pub use config::RunConfig;
pub use error::{CliError, Result};
