//! Iteration driver, stopping rules and convergence traces shared by every solver.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dist_sq, norm_inf};
use crate::problem::QpProblem;

/// One first-order method, advanced one iteration at a time.
pub trait Iteration {
    fn problem(&self) -> &QpProblem;

    fn step(&mut self) -> Result<()>;

    /// Completed iterations.
    fn iterations(&self) -> usize;

    /// Raw primal iterate after the last step.
    fn primal(&self) -> &[f64];

    /// Current estimate of the multiplier of `Gz = g`.
    fn dual(&self) -> &[f64];

    /// Ergodic average used for feasibility reporting (`ẑᵏ` for PIPG).
    fn averaged(&self) -> &[f64];

    /// Ergodic average used for distance reporting (`z̃ᵏ` for PIPG).
    fn averaged_tilde(&self) -> &[f64] {
        self.averaged()
    }

    /// Cumulative number of projections onto `Z`.
    fn projections(&self) -> u64;

    /// `Gz − g` for the raw iterate, if the method already has it.
    fn cached_residual(&self) -> Option<&[f64]> {
        None
    }
}

/// Which iterate a feasibility stopping test looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Monitor {
    #[default]
    Raw,
    Hat,
    Tilde,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_iterations: usize,
    #[serde(default)]
    pub max_projections: Option<u64>,
    /// Stop once `‖Gz − g‖_∞ ≤ tolerance` on the monitored iterate.
    #[serde(default)]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub monitor: Monitor,
    /// Stop once every KKT residual of `(raw z, dual)` is below this.
    #[serde(default)]
    pub kkt_tolerance: Option<f64>,
    #[serde(default = "default_kkt_every")]
    pub kkt_check_every: usize,
}

fn default_kkt_every() -> usize {
    50
}

impl StoppingRule {
    pub fn iterations(max_iterations: usize) -> Self {
        Self {
            max_iterations,
            max_projections: None,
            tolerance: None,
            monitor: Monitor::Raw,
            kkt_tolerance: None,
            kkt_check_every: default_kkt_every(),
        }
    }

    pub fn feasibility(tolerance: f64, max_iterations: usize) -> Self {
        Self { tolerance: Some(tolerance), ..Self::iterations(max_iterations) }
    }

    pub fn with_monitor(mut self, monitor: Monitor) -> Self {
        self.monitor = monitor;
        self
    }

    pub fn with_max_projections(mut self, cap: u64) -> Self {
        self.max_projections = Some(cap);
        self
    }

    pub fn with_kkt(mut self, tolerance: f64, every: usize) -> Self {
        self.kkt_tolerance = Some(tolerance);
        self.kkt_check_every = every.max(1);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Feasibility,
    Kkt,
    MaxIterations,
    MaxProjections,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(self, Self::Feasibility | Self::Kkt)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Solution {
    /// Raw primal iterate.
    pub z: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub w: Vec<f64>,
    pub iterations: usize,
    pub projections: u64,
    pub reason: StopReason,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TraceOptions {
    pub enabled: bool,
    /// Reference optimum for the distance columns.
    pub reference: Option<Vec<f64>>,
}

impl TraceOptions {
    pub fn off() -> Self {
        Self::default()
    }

    pub fn on(reference: Option<Vec<f64>>) -> Self {
        Self { enabled: true, reference }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub k: usize,
    /// `‖Gz − g‖₂²` of the raw iterate
    pub feas_sq: f64,
    /// `‖Gz − g‖_∞` of the raw iterate
    pub feas_inf: f64,
    pub feas_sq_avg: f64,
    pub feas_inf_avg: f64,
    /// `‖z − z⋆‖₂²`
    pub dist_sq: Option<f64>,
    pub dist_sq_avg: Option<f64>,
    /// `‖z̃ − z⋆‖²_H`
    pub dist_h_sq_avg: Option<f64>,
    pub projections: u64,
    pub seconds: f64,
}

/// Per-iteration history; `k` strictly increasing, projections nondecreasing.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
}

impl ConvergenceTrace {
    pub fn push(&mut self, record: TraceRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.k < record.k && r.projections <= record.projections));
        self.records.push(record);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Runs `solver` until `stop` fires.
pub fn run<S: Iteration + ?Sized>(solver: &mut S, stop: &StoppingRule, trace: &TraceOptions) -> Result<(Solution, ConvergenceTrace)> {
    if stop.max_iterations == 0 {
        return Err(Error::Config("max_iterations must be at least 1".into()));
    }
    let mut history = ConvergenceTrace::default();
    let mut residual = vec![0.0; solver.problem().num_constraints()];
    let reason = loop {
        let started = Instant::now();
        solver.step()?;
        let seconds = started.elapsed().as_secs_f64();
        let k = solver.iterations();

        if trace.enabled {
            history.push(record(&*solver, k, seconds, trace.reference.as_deref(), &mut residual));
        }
        if let Some(tol) = stop.tolerance {
            let z = match stop.monitor {
                Monitor::Raw => None,
                Monitor::Hat => Some(solver.averaged()),
                Monitor::Tilde => Some(solver.averaged_tilde()),
            };
            let violation = match (z, solver.cached_residual()) {
                (None, Some(r)) => norm_inf(r),
                (z, _) => {
                    solver.problem().constraint_residual_into(z.unwrap_or(solver.primal()), &mut residual);
                    norm_inf(&residual)
                }
            };
            if violation <= tol {
                break StopReason::Feasibility;
            }
        }
        if let Some(tol) = stop.kkt_tolerance {
            if k % stop.kkt_check_every == 0 && solver.problem().kkt_residual(solver.primal(), solver.dual())?.within(tol) {
                break StopReason::Kkt;
            }
        }
        if stop.max_projections.is_some_and(|cap| solver.projections() >= cap) {
            break StopReason::MaxProjections;
        }
        if k >= stop.max_iterations {
            break StopReason::MaxIterations;
        }
    };
    let solution = Solution {
        z: solver.primal().to_vec(),
        z_hat: solver.averaged().to_vec(),
        z_tilde: solver.averaged_tilde().to_vec(),
        w: solver.dual().to_vec(),
        iterations: solver.iterations(),
        projections: solver.projections(),
        reason,
    };
    Ok((solution, history))
}

fn record<S: Iteration + ?Sized>(solver: &S, k: usize, seconds: f64, reference: Option<&[f64]>, buf: &mut [f64]) -> TraceRecord {
    let problem = solver.problem();
    let (feas_sq, feas_inf) = match solver.cached_residual() {
        Some(r) => (r.iter().map(|v| v * v).sum(), norm_inf(r)),
        None => {
            problem.constraint_residual_into(solver.primal(), buf);
            (buf.iter().map(|v| v * v).sum(), norm_inf(buf))
        }
    };
    problem.constraint_residual_into(solver.averaged(), buf);
    let feas_sq_avg = buf.iter().map(|v| v * v).sum();
    let feas_inf_avg = norm_inf(buf);
    TraceRecord {
        k,
        feas_sq,
        feas_inf,
        feas_sq_avg,
        feas_inf_avg,
        dist_sq: reference.map(|r| dist_sq(solver.primal(), r)),
        dist_sq_avg: reference.map(|r| dist_sq(solver.averaged_tilde(), r)),
        dist_h_sq_avg: reference.map(|r| problem.h_dist_sq(solver.averaged_tilde(), r)),
        projections: solver.projections(),
        seconds,
    }
}

/// Uniform running mean, used by methods without their own averaging scheme.
#[derive(Debug, Clone)]
pub(crate) struct UniformAverage {
    pub(crate) mean: Vec<f64>,
    count: usize,
}

impl UniformAverage {
    pub(crate) fn new(n: usize) -> Self {
        Self { mean: vec![0.0; n], count: 0 }
    }

    pub(crate) fn push(&mut self, z: &[f64]) {
        self.count += 1;
        let c = 1.0 / self.count as f64;
        for (m, v) in self.mean.iter_mut().zip(z) {
            *m += c * (v - *m);
        }
    }
}
