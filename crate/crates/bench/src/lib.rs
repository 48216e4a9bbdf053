//! Experiment harness for the PIPG solver family: reference solutions,
//! convergence traces and projection-count sweeps on the tracking benchmark.

pub mod config;
pub mod reference;
pub mod solvers;
pub mod sweep;
pub mod trace_run;

use thiserror::Error;

pub use config::{ExperimentConfig, InitDistribution};
pub use reference::{compute_reference, ReferenceOptions, ReferenceSolution};
pub use solvers::{SolverId, SolverSettings};
pub use sweep::{run_sweep, SweepReport, SweepRow};
pub use trace_run::{run_trace, write_trace_csv};

/// Environment variable holding the worker count for sweeps.
pub const THREADS_ENV: &str = "PIPG_THREADS";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The reference solvers did not converge or did not agree. Both
    /// candidates are kept for inspection.
    #[error("certification failed: {reason}")]
    Certification { reason: String, candidates: Box<[reference::Candidate; 2]> },

    #[error(transparent)]
    Solver(#[from] pipg::Error),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl BenchError {
    /// Process exit code for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Certification { .. } | Self::Solver(pipg::Error::Config(_)) => 1,
            _ => 2,
        }
    }
}

/// Thread pool sized from [`THREADS_ENV`], or rayon's default when unset.
pub fn thread_pool() -> Result<rayon::ThreadPool, BenchError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        let n: usize = raw.trim().parse().map_err(|_| BenchError::Config(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
        if n == 0 {
            return Err(BenchError::Config(format!("{THREADS_ENV} must be positive")));
        }
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| BenchError::Config(e.to_string()))
}

/// `‖a − b‖₂ / ‖b‖₂`, falling back to the absolute distance when `b ≈ 0`.
pub fn relative_distance(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if scale < 1e-30 {
        diff
    } else {
        diff / scale
    }
}

