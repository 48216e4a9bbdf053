//! Chambolle–Pock primal-dual iterations with a linearized primal step.
//!
//! Constant steps:
//!
//! ```text
//!     zᵏ⁺¹ = Π_Z[zᵏ − α(Hzᵏ + h + Gᵀwᵏ)]
//!     wᵏ⁺¹ = wᵏ + β(G(2zᵏ⁺¹ − zᵏ) − g)
//! ```
//!
//! valid when `α(λ + βσ) ≤ 1`.
//!
//! Accelerated (μ > 0), dual step first:
//!
//! ```text
//!     wᵏ⁺¹ = wᵏ + βᵏ(G(zᵏ + γᵏ(zᵏ − zᵏ⁻¹)) − g)
//!     zᵏ⁺¹ = Π_Z[zᵏ − αᵏ/(μαᵏ + 1) (Hzᵏ + h + Gᵀwᵏ⁺¹)]
//! ```
//!
//! Step recursion, following the strongly convex rule of Chambolle & Pock,
//! "On the ergodic convergence rates of a first-order primal-dual algorithm",
//! Math. Program. 159 (2016), Sec. 5.2:
//!
//! ```text
//!     θᵏ   = 1/√(1 + μαᵏ)
//!     αᵏ⁺¹ = θᵏ αᵏ
//!     βᵏ⁺¹ = βᵏ / θᵏ
//!     γᵏ⁺¹ = θᵏ
//! ```
//!
//! started from `β¹ = μ/σ`, `α¹ = 1/(λ − μ + β¹σ)`, `γ¹ = 0`. The product
//! `αᵏβᵏ` stays fixed, so `1/αᵏ ≥ λ − μ + βᵏσ` holds for every `k` once it
//! holds at `k = 1`.

use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::problem::QpProblem;
use crate::spectral::SpectralBounds;
use crate::trace::{run, ConvergenceTrace, Iteration, Solution, StoppingRule, TraceOptions, UniformAverage};

/// Slack allowed on `α(λ + βσ) ≤ 1` for rounding in the default steps.
const STEP_CONDITION_SLACK: f64 = 1e-12;

/// `β = √(λ/σ)`, `α = 1/(λ + βσ)`.
pub fn default_const_steps(bounds: &SpectralBounds) -> (f64, f64) {
    let beta = (bounds.lambda / bounds.sigma).sqrt();
    (1.0 / (bounds.lambda + beta * bounds.sigma), beta)
}

#[derive(Debug, Clone)]
struct Core<'a> {
    problem: &'a QpProblem,
    z: Vec<f64>,
    z_prev: Vec<f64>,
    w: Vec<f64>,
    k: usize,
    average: UniformAverage,
    projections: u64,
    grad: Vec<f64>,
    residual: Vec<f64>,
    extrapolated: Vec<f64>,
}

impl<'a> Core<'a> {
    fn new(problem: &'a QpProblem, init: (Vec<f64>, Vec<f64>)) -> Result<Self> {
        let (n, m) = (problem.dim(), problem.num_constraints());
        let (z, w) = init;
        if z.len() != n {
            return Err(Error::DimensionMismatch { what: "initial z", expected: n, found: z.len() });
        }
        if w.len() != m {
            return Err(Error::DimensionMismatch { what: "initial w", expected: m, found: w.len() });
        }
        Ok(Self {
            problem,
            z_prev: z.clone(),
            z,
            w,
            k: 0,
            average: UniformAverage::new(n),
            projections: 0,
            grad: vec![0.0; n],
            residual: vec![0.0; m],
            extrapolated: vec![0.0; n],
        })
    }

    /// `z ← Π_Z[z − step·(Hz + h + Gᵀw)]`, keeping the old iterate in `z_prev`.
    fn primal_step(&mut self, step: f64) -> Result<()> {
        let p = self.problem;
        p.hessian().mul_vec_into(&self.z, &mut self.grad);
        for (g, h) in self.grad.iter_mut().zip(p.linear()) {
            *g += h;
        }
        p.constraints().tmul_vec_acc(1.0, &self.w, &mut self.grad);
        std::mem::swap(&mut self.z, &mut self.z_prev);
        for ((z, zp), g) in self.z.iter_mut().zip(&self.z_prev).zip(&self.grad) {
            *z = zp - step * g;
        }
        p.set().project_in_place(&mut self.z)?;
        self.projections += 1;
        Ok(())
    }

    /// `w ← w + β(G·x − g)` with `x = z + c(z − z_prev)`.
    fn dual_step(&mut self, beta: f64, c: f64) {
        for ((e, z), zp) in self.extrapolated.iter_mut().zip(&self.z).zip(&self.z_prev) {
            *e = z + c * (z - zp);
        }
        self.problem.constraint_residual_into(&self.extrapolated, &mut self.residual);
        for (w, r) in self.w.iter_mut().zip(&self.residual) {
            *w += beta * r;
        }
    }

    fn finish(&mut self) -> Result<()> {
        self.average.push(&self.z);
        self.k += 1;
        if !all_finite(&self.z) || !all_finite(&self.w) {
            return Err(Error::NonFinite { iteration: self.k });
        }
        Ok(())
    }
}

macro_rules! delegate_iteration {
    ($ty:ty) => {
        impl Iteration for $ty {
            fn problem(&self) -> &QpProblem {
                self.core.problem
            }
            fn step(&mut self) -> Result<()> {
                self.advance()
            }
            fn iterations(&self) -> usize {
                self.core.k
            }
            fn primal(&self) -> &[f64] {
                &self.core.z
            }
            fn dual(&self) -> &[f64] {
                &self.core.w
            }
            fn averaged(&self) -> &[f64] {
                &self.core.average.mean
            }
            fn projections(&self) -> u64 {
                self.core.projections
            }
        }
    };
}

#[derive(Debug, Clone)]
pub struct ChambollePockConst<'a> {
    core: Core<'a>,
    alpha: f64,
    beta: f64,
}

impl<'a> ChambollePockConst<'a> {
    /// `bounds` is only used to check `α(λ + βσ) ≤ 1`.
    pub fn new(problem: &'a QpProblem, bounds: &SpectralBounds, alpha: f64, beta: f64, init: (Vec<f64>, Vec<f64>)) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0) {
            return Err(Error::Config(format!("step sizes must be positive (α={alpha}, β={beta})")));
        }
        let product = alpha * (bounds.lambda + beta * bounds.sigma);
        if product > 1.0 + STEP_CONDITION_SLACK {
            return Err(Error::Config(format!("step pair violates α(λ + βσ) ≤ 1: got {product}")));
        }
        Ok(Self { core: Core::new(problem, init)?, alpha, beta })
    }

    fn advance(&mut self) -> Result<()> {
        self.core.primal_step(self.alpha)?;
        self.core.dual_step(self.beta, 1.0);
        self.core.finish()
    }
}

delegate_iteration!(ChambollePockConst<'_>);

#[derive(Debug, Clone)]
pub struct ChambollePockAccel<'a> {
    core: Core<'a>,
    mu: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
}

impl<'a> ChambollePockAccel<'a> {
    pub fn new(problem: &'a QpProblem, bounds: &SpectralBounds, init: (Vec<f64>, Vec<f64>)) -> Result<Self> {
        if !bounds.is_strongly_convex() {
            return Err(Error::Unsupported("accelerated Chambolle–Pock needs μ > 0".into()));
        }
        let beta = bounds.mu / bounds.sigma;
        let alpha = 1.0 / (bounds.lambda - bounds.mu + beta * bounds.sigma);
        Ok(Self { core: Core::new(problem, init)?, mu: bounds.mu, alpha, beta, gamma: 0.0 })
    }

    /// `(αᵏ, βᵏ, γᵏ)` for the next iteration.
    pub fn steps(&self) -> (f64, f64, f64) {
        (self.alpha, self.beta, self.gamma)
    }

    fn advance(&mut self) -> Result<()> {
        self.core.dual_step(self.beta, self.gamma);
        self.core.primal_step(self.alpha / (self.mu * self.alpha + 1.0))?;
        let theta = 1.0 / (1.0 + self.mu * self.alpha).sqrt();
        self.alpha *= theta;
        self.beta /= theta;
        self.gamma = theta;
        self.core.finish()
    }
}

delegate_iteration!(ChambollePockAccel<'_>);

pub fn solve_const(
    problem: &QpProblem,
    bounds: &SpectralBounds,
    steps: (f64, f64),
    init: (Vec<f64>, Vec<f64>),
    stop: &StoppingRule,
    trace: &TraceOptions,
) -> Result<(Solution, ConvergenceTrace)> {
    run(&mut ChambollePockConst::new(problem, bounds, steps.0, steps.1, init)?, stop, trace)
}

pub fn solve_accel(
    problem: &QpProblem,
    bounds: &SpectralBounds,
    init: (Vec<f64>, Vec<f64>),
    stop: &StoppingRule,
    trace: &TraceOptions,
) -> Result<(Solution, ConvergenceTrace)> {
    run(&mut ChambollePockAccel::new(problem, bounds, init)?, stop, trace)
}
