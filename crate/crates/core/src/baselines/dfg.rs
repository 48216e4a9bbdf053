//! Dual fast gradient method.
//!
//! ```text
//!     zᵏ⁺¹ = argmin_{z∈Z} ½zᵀHz + hᵀz + ⟨vᵏ, Gz⟩
//!     wᵏ⁺¹ = vᵏ + α(Gzᵏ⁺¹ − g)
//!     vᵏ⁺¹ = wᵏ⁺¹ + k/(k+3) (wᵏ⁺¹ − wᵏ)
//! ```
//!
//! with `k` counted from 0 and `α = μ/σ`. The argmin is approximated by an
//! inner accelerated projected gradient loop with step `1/λ` and momentum
//! `(√λ − √μ)/(√λ + √μ)`, warm-started from the previous outer iterate.

use crate::error::{Error, Result};
use crate::linalg::{all_finite, norm2};
use crate::problem::QpProblem;
use crate::spectral::SpectralBounds;
use crate::trace::{run, ConvergenceTrace, Iteration, Solution, StoppingRule, TraceOptions, UniformAverage};

pub const DEFAULT_MAX_INNER: usize = 10_000;

#[derive(Debug, Clone)]
pub struct DualFastGradient<'a> {
    problem: &'a QpProblem,
    bounds: SpectralBounds,
    alpha: f64,
    inner_tol: f64,
    max_inner: usize,
    z: Vec<f64>,
    w: Vec<f64>,
    v: Vec<f64>,
    outer: usize,
    average: UniformAverage,
    projections: u64,
    last_inner: usize,
    // scratch
    y: Vec<f64>,
    z_next: Vec<f64>,
    grad: Vec<f64>,
    residual: Vec<f64>,
}

impl<'a> DualFastGradient<'a> {
    pub fn new(problem: &'a QpProblem, bounds: SpectralBounds, init: (Vec<f64>, Vec<f64>), inner_tol: f64) -> Result<Self> {
        if !bounds.is_strongly_convex() {
            return Err(Error::Unsupported("dual fast gradient needs a strongly convex objective (μ > 0)".into()));
        }
        if !(inner_tol > 0.0 && inner_tol < 1.0) {
            return Err(Error::Config(format!("inner tolerance must lie in (0, 1), got {inner_tol}")));
        }
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
            bounds,
            alpha: bounds.mu / bounds.sigma,
            inner_tol,
            max_inner: DEFAULT_MAX_INNER,
            v: w.clone(),
            w,
            outer: 0,
            average: UniformAverage::new(n),
            projections: 0,
            last_inner: 0,
            y: z.clone(),
            z_next: vec![0.0; n],
            grad: vec![0.0; n],
            residual: vec![0.0; m],
            z,
        })
    }

    pub fn with_max_inner(mut self, max_inner: usize) -> Self {
        self.max_inner = max_inner.max(1);
        self
    }

    /// Outer step size `α`.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Inner iterations spent by the most recent outer step.
    pub fn last_inner_iterations(&self) -> usize {
        self.last_inner
    }

    fn inner_loop(&mut self) -> Result<()> {
        let p = self.problem;
        let (sl, sm) = (self.bounds.lambda.sqrt(), self.bounds.mu.sqrt());
        let momentum = (sl - sm) / (sl + sm);
        let step = 1.0 / self.bounds.lambda;
        self.y.copy_from_slice(&self.z);
        let mut j = 0;
        loop {
            p.hessian().mul_vec_into(&self.y, &mut self.grad);
            for (g, h) in self.grad.iter_mut().zip(p.linear()) {
                *g += h;
            }
            p.constraints().tmul_vec_acc(1.0, &self.v, &mut self.grad);
            for ((zn, y), g) in self.z_next.iter_mut().zip(&self.y).zip(&self.grad) {
                *zn = y - step * g;
            }
            p.set().project_in_place(&mut self.z_next)?;
            self.projections += 1;
            j += 1;

            let mut diff = 0.0;
            for ((y, zn), z) in self.y.iter_mut().zip(&self.z_next).zip(&self.z) {
                let d = zn - z;
                diff += d * d;
                *y = zn + momentum * d;
            }
            let diff = diff.sqrt();
            let base = norm2(&self.z);
            std::mem::swap(&mut self.z, &mut self.z_next);
            let done = if base < 1e-30 { diff <= self.inner_tol } else { diff / base <= self.inner_tol };
            if done || j >= self.max_inner {
                break;
            }
        }
        self.last_inner = j;
        Ok(())
    }
}

impl Iteration for DualFastGradient<'_> {
    fn problem(&self) -> &QpProblem {
        self.problem
    }

    fn step(&mut self) -> Result<()> {
        self.inner_loop()?;
        let k = self.outer as f64;
        self.problem.constraint_residual_into(&self.z, &mut self.residual);
        let momentum = k / (k + 3.0);
        for ((w, v), r) in self.w.iter_mut().zip(self.v.iter_mut()).zip(&self.residual) {
            let next = *v + self.alpha * r;
            *v = next + momentum * (next - *w);
            *w = next;
        }
        self.average.push(&self.z);
        self.outer += 1;
        if !all_finite(&self.z) || !all_finite(&self.w) {
            return Err(Error::NonFinite { iteration: self.outer });
        }
        Ok(())
    }

    fn iterations(&self) -> usize {
        self.outer
    }
    fn primal(&self) -> &[f64] {
        &self.z
    }
    fn dual(&self) -> &[f64] {
        &self.w
    }
    fn averaged(&self) -> &[f64] {
        &self.average.mean
    }
    fn projections(&self) -> u64 {
        self.projections
    }
    fn cached_residual(&self) -> Option<&[f64]> {
        (self.outer > 0).then_some(&self.residual[..])
    }
}

pub fn solve(
    problem: &QpProblem,
    bounds: SpectralBounds,
    init: (Vec<f64>, Vec<f64>),
    stop: &StoppingRule,
    inner_tol: f64,
    trace: &TraceOptions,
) -> Result<(Solution, ConvergenceTrace)> {
    run(&mut DualFastGradient::new(problem, bounds, init, inner_tol)?, stop, trace)
}
