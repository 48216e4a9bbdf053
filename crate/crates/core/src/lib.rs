//! First-order solvers for the equality-constrained QPs that arise in model
//! predictive control.

pub mod baselines;
pub mod error;
pub mod ldl;
pub mod linalg;
pub mod mpc;
pub mod problem;
pub mod projections;
pub mod solver;
pub mod spectral;
pub mod trace;

pub use error::{Error, Result};
pub use linalg::{CsrMatrix, DenseMatrix};
pub use mpc::{build_benchmark, Execution, StageState, TrackingProblem};
pub use problem::{KktResidual, QpProblem};
pub use projections::{ConvexFunction, ConvexSet};
pub use solver::{pipg_step, LyapunovForm, Pipg, SolverState, StepRule, StepSchedule};
pub use spectral::{estimate_bounds, SpectralBounds};
pub use trace::{run, ConvergenceTrace, Iteration, Monitor, Solution, StopReason, StoppingRule, TraceOptions, TraceRecord};
