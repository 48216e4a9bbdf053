//! Proportional-integral projected gradient method.
//!
//! Each iteration applies a projected gradient step to `z` whose gradient is
//! corrected by proportional (`v`) and integral (`w`) feedback on the
//! equality-constraint violation:
//!
//! ```text
//!     vᵏ    = wᵏ + βᵏ (Gzᵏ − g)
//!     zᵏ⁺¹  = π_Z[zᵏ − αᵏ (Hzᵏ + h + Gᵀvᵏ)]
//!     wᵏ⁺¹  = wᵏ + βᵏ (Gzᵏ⁺¹ − g)
//! ```
//!
//! Iterations are counted from `k = 1`. Two step-size rules are supported:
//!
//! * constant: `αᵏ = 1/(βσ + λ)`, `βᵏ = β`, with uniform averages
//!   `ẑᵏ = (1/k) Σ zʲ` and `z̃ᵏ = (1/k) Σ zʲ⁺¹`; feasibility and distance
//!   both decay as `O(1/k)`.
//! * varying (needs `μ > 0`): `αᵏ = 2/((k+1)μ + 2λ)`, `βᵏ = (k+1)μ/(2σ)`,
//!   with weights `(j+1)(j+2)` on `zʲ` for `ẑᵏ` and `(j+2)` on `zʲ⁺¹` for
//!   `z̃ᵏ`; feasibility decays as `O(1/k³)` and distance as `O(1/k²)`.
//!
//! Both rules satisfy `λ + σβᵏ = 1/αᵏ` exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, dist_sq};
use crate::problem::QpProblem;
use crate::spectral::SpectralBounds;
use crate::trace::{run, ConvergenceTrace, Iteration, Solution, StoppingRule, TraceOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum StepRule {
    Constant { beta: f64 },
    Varying,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub rule: StepRule,
    pub bounds: SpectralBounds,
}

impl StepSchedule {
    pub fn constant(bounds: SpectralBounds, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::Config(format!("constant schedule needs β > 0, got {beta}")));
        }
        Ok(Self { rule: StepRule::Constant { beta }, bounds })
    }

    /// Constant schedule with `β = √(λ/σ)`, which balances `βσ` against `λ`.
    pub fn constant_default(bounds: SpectralBounds) -> Self {
        Self { rule: StepRule::Constant { beta: (bounds.lambda / bounds.sigma).sqrt() }, bounds }
    }

    pub fn varying(bounds: SpectralBounds) -> Result<Self> {
        if !bounds.is_strongly_convex() {
            return Err(Error::Unsupported("varying step sizes need μ > 0".into()));
        }
        Ok(Self { rule: StepRule::Varying, bounds })
    }

    pub fn alpha(&self, k: usize) -> f64 {
        let SpectralBounds { mu, lambda, sigma } = self.bounds;
        match self.rule {
            StepRule::Constant { beta } => 1.0 / (beta * sigma + lambda),
            StepRule::Varying => 2.0 / ((k as f64 + 1.0) * mu + 2.0 * lambda),
        }
    }

    pub fn beta(&self, k: usize) -> f64 {
        let SpectralBounds { mu, sigma, .. } = self.bounds;
        match self.rule {
            StepRule::Constant { beta } => beta,
            StepRule::Varying => (k as f64 + 1.0) * mu / (2.0 * sigma),
        }
    }

    /// Weight of `zᵏ` in `ẑ` and the total weight of `ẑᵏ`.
    pub(crate) fn hat_weights(&self, k: usize) -> (f64, f64) {
        let kf = k as f64;
        match self.rule {
            StepRule::Constant { .. } => (1.0, kf),
            StepRule::Varying => ((kf + 1.0) * (kf + 2.0), kf * (kf * kf + 6.0 * kf + 11.0) / 3.0),
        }
    }

    /// Weight of `zᵏ⁺¹` in `z̃` and the total weight of `z̃ᵏ`.
    pub(crate) fn tilde_weights(&self, k: usize) -> (f64, f64) {
        let kf = k as f64;
        match self.rule {
            StepRule::Constant { .. } => (1.0, kf),
            StepRule::Varying => (kf + 2.0, kf * (kf + 5.0) / 2.0),
        }
    }

    /// Initial Lyapunov value `V¹` from which the ergodic bounds are stated.
    ///
    /// Constant: `(1/2α)‖z¹ − z⋆‖² + (1/2β)‖w¹ − w⋆‖²`. Varying: see
    /// [`LyapunovForm`].
    pub fn initial_lyapunov(&self, form: LyapunovForm, z1: &[f64], w1: &[f64], z_star: &[f64], w_star: &[f64]) -> f64 {
        let dz = dist_sq(z1, z_star);
        let dw = dist_sq(w1, w_star);
        let SpectralBounds { mu, lambda, sigma } = self.bounds;
        match (self.rule, form) {
            (StepRule::Constant { beta }, _) => dz / (2.0 * self.alpha(1)) + dw / (2.0 * beta),
            (StepRule::Varying, LyapunovForm::Stated) => dz / (2.0 * (mu + lambda)) + sigma / (2.0 * mu) * dw,
            (StepRule::Varying, LyapunovForm::Telescoped) => (mu + 2.0 * lambda) / 4.0 * dz + sigma / mu * dw,
        }
    }

    /// Right-hand sides `(feasibility, distance)` of the ergodic bounds at `k`:
    /// `½‖Gẑᵏ − g‖² ≤ feasibility` and `½‖z̃ᵏ − z⋆‖²_H ≤ distance`.
    pub fn ergodic_bounds(&self, k: usize, v1: f64) -> (f64, f64) {
        let kf = k as f64;
        let SpectralBounds { mu, lambda, sigma } = self.bounds;
        match self.rule {
            StepRule::Constant { beta } => (v1 / (beta * kf), v1 / kf),
            StepRule::Varying => (
                12.0 * lambda * sigma * v1 / (mu * mu * kf * (kf * kf + 6.0 * kf + 11.0)),
                4.0 * lambda * v1 / (mu * kf * (kf + 5.0)),
            ),
        }
    }
}

/// How `V¹` is evaluated for the varying schedule.
///
/// `Stated` is `‖z¹ − z⋆‖²/(2(μ+λ)) + σ‖w¹ − w⋆‖²/(2μ)`, the form the rate
/// bound is usually quoted with. `Telescoped` is `‖z¹ − z⋆‖²/(2α⁰) +
/// ‖w¹ − w⋆‖²/(2β⁰)` with `α⁰, β⁰` the varying rule evaluated at `k = 0`,
/// which is the quantity the weighted telescoping sum actually starts from.
/// The telescoped value is never smaller.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LyapunovForm {
    Stated,
    Telescoped,
}

/// Iterates and running averages of one PIPG run.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Primal iterate `zᵏ`.
    pub z: Vec<f64>,
    /// Integral dual `wᵏ`.
    pub w: Vec<f64>,
    /// Proportional-corrected dual from the last step.
    pub v: Vec<f64>,
    /// Index of the next iteration; starts at 1.
    pub k: usize,
    pub z_hat: Vec<f64>,
    pub z_tilde: Vec<f64>,
    pub hat_weight: f64,
    pub tilde_weight: f64,
    pub projections: u64,
    /// `Gzᵏ − g`
    residual: Vec<f64>,
    grad: Vec<f64>,
    z_prev: Vec<f64>,
}

impl SolverState {
    pub fn new(problem: &QpProblem, z: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        let (n, m) = (problem.dim(), problem.num_constraints());
        if z.len() != n {
            return Err(Error::DimensionMismatch { what: "initial z", expected: n, found: z.len() });
        }
        if w.len() != m {
            return Err(Error::DimensionMismatch { what: "initial w", expected: m, found: w.len() });
        }
        let residual = problem.constraint_residual(&z);
        Ok(Self {
            z_hat: z.clone(),
            z_tilde: z.clone(),
            z_prev: z.clone(),
            v: w.clone(),
            z,
            w,
            k: 1,
            hat_weight: 0.0,
            tilde_weight: 0.0,
            projections: 0,
            residual,
            grad: vec![0.0; n],
        })
    }

    pub fn zeros(problem: &QpProblem) -> Self {
        Self::new(problem, vec![0.0; problem.dim()], vec![0.0; problem.num_constraints()]).expect("dimensions match")
    }

    /// `Gz − g` for the current `z`.
    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    /// Completed iterations.
    pub fn iterations(&self) -> usize {
        self.k - 1
    }
}

/// One PIPG iteration. Exactly one projection onto `Z`.
pub fn pipg_step(problem: &QpProblem, schedule: &StepSchedule, state: &mut SolverState) -> Result<()> {
    let k = state.k;
    let alpha = schedule.alpha(k);
    let beta = schedule.beta(k);

    for ((v, w), r) in state.v.iter_mut().zip(&state.w).zip(&state.residual) {
        *v = w + beta * r;
    }
    problem.hessian().mul_vec_into(&state.z, &mut state.grad);
    for (g, h) in state.grad.iter_mut().zip(problem.linear()) {
        *g += h;
    }
    problem.constraints().tmul_vec_acc(1.0, &state.v, &mut state.grad);

    std::mem::swap(&mut state.z_prev, &mut state.z);
    for ((z, zp), g) in state.z.iter_mut().zip(&state.z_prev).zip(&state.grad) {
        *z = zp - alpha * g;
    }
    problem.set().project_in_place(&mut state.z)?;
    state.projections += 1;

    problem.constraint_residual_into(&state.z, &mut state.residual);
    for (w, r) in state.w.iter_mut().zip(&state.residual) {
        *w += beta * r;
    }

    let (wh, total_h) = schedule.hat_weights(k);
    let (wt, total_t) = schedule.tilde_weights(k);
    state.hat_weight = total_h;
    state.tilde_weight = total_t;
    running_mean(&mut state.z_hat, &state.z_prev, wh / total_h);
    running_mean(&mut state.z_tilde, &state.z, wt / total_t);
    state.k += 1;

    if !all_finite(&state.z) || !all_finite(&state.w) {
        return Err(Error::NonFinite { iteration: k });
    }
    Ok(())
}

fn running_mean(avg: &mut [f64], z: &[f64], c: f64) {
    for (a, v) in avg.iter_mut().zip(z) {
        *a += c * (v - *a);
    }
}

/// PIPG as an [`Iteration`].
#[derive(Debug, Clone)]
pub struct Pipg<'a> {
    problem: &'a QpProblem,
    schedule: StepSchedule,
    state: SolverState,
}

impl<'a> Pipg<'a> {
    pub fn new(problem: &'a QpProblem, schedule: StepSchedule, state: SolverState) -> Self {
        Self { problem, schedule, state }
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn schedule(&self) -> &StepSchedule {
        &self.schedule
    }
}

impl Iteration for Pipg<'_> {
    fn problem(&self) -> &QpProblem {
        self.problem
    }
    fn step(&mut self) -> Result<()> {
        pipg_step(self.problem, &self.schedule, &mut self.state)
    }
    fn iterations(&self) -> usize {
        self.state.iterations()
    }
    fn primal(&self) -> &[f64] {
        &self.state.z
    }
    fn dual(&self) -> &[f64] {
        &self.state.w
    }
    fn averaged(&self) -> &[f64] {
        &self.state.z_hat
    }
    fn averaged_tilde(&self) -> &[f64] {
        &self.state.z_tilde
    }
    fn projections(&self) -> u64 {
        self.state.projections
    }
    fn cached_residual(&self) -> Option<&[f64]> {
        Some(&self.state.residual)
    }
}

/// Runs PIPG from `(z¹, w¹) = init` until `stop` fires.
pub fn solve(
    problem: &QpProblem,
    schedule: StepSchedule,
    init: (Vec<f64>, Vec<f64>),
    stop: &StoppingRule,
    trace: &TraceOptions,
) -> Result<(Solution, ConvergenceTrace)> {
    let state = SolverState::new(problem, init.0, init.1)?;
    run(&mut Pipg::new(problem, schedule, state), stop, trace)
}
