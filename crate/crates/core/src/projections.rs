//! Euclidean projections onto simple closed convex sets and their Cartesian
//! products.
//!
//! Every set here is nonempty, closed and convex, so `π_S[x] = argmin_{s∈S} ‖s − x‖₂`
//! is unique. Balls, boxes, halfspaces and second-order cones use closed
//! forms. Epigraphs and sublevel sets of a smooth convex function reduce to a
//! scalar root-finding problem in the proximal parameter `μ`:
//!
//! ```text
//!     π_{f ≤ c}[x] = prox_{μ f}(x)   with μ ≥ 0 solving  f(prox_{μ f}(x)) = c
//! ```
//!
//! where `prox_{μ f}(x) = (I + μ∇f)⁻¹(x)`. The epigraph `{(y, t) : f(y) ≤ t}` is
//! the zero sublevel set of `F(y, t) = f(y) − t`, so both share one solver.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2};

/// Relative accuracy `|f − level| ≤ tol·max(1, |level|)` of the level-set root finder.
pub const LEVEL_TOLERANCE: f64 = 1e-10;
/// Band actually targeted, `−band ≤ f − level ≤ 0`. Tighter than
/// [`LEVEL_TOLERANCE`] because positional error is the level error divided by
/// `‖∇f‖`, and the projection laws are stated on points.
const LEVEL_BAND: f64 = 1e-13;
/// Iteration cap shared by the bracketing and refinement phases of the root finder.
pub const LEVEL_MAX_ITERATIONS: usize = 200;

/// A convex, twice differentiable function `ℝⁿ → ℝ`.
///
/// The Hessian is only ever needed as a product with a vector.
pub trait ConvexFunction: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    fn hessian_vec(&self, x: &[f64], d: &[f64], out: &mut [f64]);
}

/// `f(x) = scale · ‖x‖₂²`
#[derive(Debug, Clone)]
pub struct SquaredNorm {
    pub dim: usize,
    pub scale: f64,
}

impl ConvexFunction for SquaredNorm {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.scale * dot(x, x)
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = 2.0 * self.scale * v;
        }
    }
    fn hessian_vec(&self, _x: &[f64], d: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(d) {
            *o = 2.0 * self.scale * v;
        }
    }
}

/// `f(x) = ⟨a, x⟩ + b`
#[derive(Debug, Clone)]
pub struct Affine {
    pub a: Vec<f64>,
    pub b: f64,
}

impl ConvexFunction for Affine {
    fn dim(&self) -> usize {
        self.a.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) + self.b
    }
    fn gradient(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.a);
    }
    fn hessian_vec(&self, _x: &[f64], _d: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

/// `f(x) = Σ exp(xᵢ)`; separable with a position-dependent curvature.
#[derive(Debug, Clone)]
pub struct SumExp {
    pub dim: usize,
}

impl ConvexFunction for SumExp {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &[f64]) -> f64 {
        x.iter().map(|v| v.exp()).sum()
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        for (o, v) in out.iter_mut().zip(x) {
            *o = v.exp();
        }
    }
    fn hessian_vec(&self, x: &[f64], d: &[f64], out: &mut [f64]) {
        for ((o, v), di) in out.iter_mut().zip(x).zip(d) {
            *o = v.exp() * di;
        }
    }
}

/// `F(y, t) = f(y) − t`, whose zero sublevel set is the epigraph of `f`.
#[derive(Debug)]
struct EpigraphLift<'a>(&'a dyn ConvexFunction);

impl ConvexFunction for EpigraphLift<'_> {
    fn dim(&self) -> usize {
        self.0.dim() + 1
    }
    fn value(&self, x: &[f64]) -> f64 {
        let (y, t) = x.split_at(x.len() - 1);
        self.0.value(y) - t[0]
    }
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = x.len() - 1;
        self.0.gradient(&x[..n], &mut out[..n]);
        out[n] = -1.0;
    }
    fn hessian_vec(&self, x: &[f64], d: &[f64], out: &mut [f64]) {
        let n = x.len() - 1;
        self.0.hessian_vec(&x[..n], &d[..n], &mut out[..n]);
        out[n] = 0.0;
    }
}

/// Cartesian product with precomputed block offsets.
#[derive(Debug, Clone)]
pub struct ProductSet {
    factors: Vec<ConvexSet>,
    offsets: Vec<usize>,
    dim: usize,
}

impl ProductSet {
    pub fn factors(&self) -> &[ConvexSet] {
        &self.factors
    }

    /// Start offset of every factor, plus the total dimension as a final entry.
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

#[derive(Debug, Clone)]
pub enum ConvexSet {
    /// `{x ∈ ℝ^dim : ‖x‖₂ ≤ radius}`
    Ball { dim: usize, radius: f64 },
    /// `{x : lower ≤ x ≤ upper}`; infinite bounds allowed.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{x : ⟨normal, x⟩ ≤ offset}`
    Halfspace { normal: Vec<f64>, offset: f64 },
    /// `{(y, t) : ‖y‖₂ ≤ t}` over `ℝ^dim`, `t` being the last coordinate.
    SecondOrderCone { dim: usize },
    /// `{(y, t) : f(y) ≤ t}`
    Epigraph { f: Arc<dyn ConvexFunction> },
    /// `{x : f(x) ≤ level}`
    Sublevel { f: Arc<dyn ConvexFunction>, level: f64 },
    Product(ProductSet),
    /// All of `ℝ^dim`.
    Whole { dim: usize },
}

impl ConvexSet {
    pub fn ball(dim: usize, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidSet(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self::Ball { dim, radius })
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { what: "box bounds", expected: lower.len(), found: upper.len() });
        }
        if let Some(i) = lower.iter().zip(&upper).position(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidSet(format!(
                "box bound {i} has lower {} > upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn halfspace(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if norm2(&normal) == 0.0 {
            return Err(Error::InvalidSet("halfspace normal must be nonzero".into()));
        }
        Ok(Self::Halfspace { normal, offset })
    }

    pub fn soc(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("second-order cone needs at least one coordinate".into()));
        }
        Ok(Self::SecondOrderCone { dim })
    }

    pub fn epigraph(f: Arc<dyn ConvexFunction>) -> Self {
        Self::Epigraph { f }
    }

    pub fn sublevel(f: Arc<dyn ConvexFunction>, level: f64) -> Self {
        Self::Sublevel { f, level }
    }

    pub fn whole(dim: usize) -> Self {
        Self::Whole { dim }
    }

    pub fn product(factors: Vec<ConvexSet>) -> Self {
        let mut offsets = Vec::with_capacity(factors.len() + 1);
        let mut dim = 0;
        for f in &factors {
            offsets.push(dim);
            dim += f.dim();
        }
        offsets.push(dim);
        Self::Product(ProductSet { factors, offsets, dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Ball { dim, .. } | Self::SecondOrderCone { dim } | Self::Whole { dim } => *dim,
            Self::Box { lower, .. } => lower.len(),
            Self::Halfspace { normal, .. } => normal.len(),
            Self::Epigraph { f } => f.dim() + 1,
            Self::Sublevel { f, .. } => f.dim(),
            Self::Product(p) => p.dim,
        }
    }

    /// Membership up to an absolute constraint tolerance.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Self::Ball { radius, .. } => norm2(x) <= radius + tol,
            Self::Box { lower, upper } => {
                x.iter().zip(lower.iter().zip(upper)).all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
            }
            Self::Halfspace { normal, offset } => dot(normal, x) <= offset + tol,
            Self::SecondOrderCone { .. } => {
                let (y, t) = x.split_at(x.len() - 1);
                norm2(y) <= t[0] + tol
            }
            Self::Epigraph { f } => {
                let (y, t) = x.split_at(x.len() - 1);
                f.value(y) <= t[0] + tol
            }
            Self::Sublevel { f, level } => f.value(x) <= level + tol,
            Self::Product(p) => p
                .factors
                .iter()
                .zip(p.offsets.windows(2))
                .all(|(s, w)| s.contains(&x[w[0]..w[1]], tol)),
            Self::Whole { .. } => true,
        }
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = x.to_vec();
        self.project_in_place(&mut out)?;
        Ok(out)
    }

    /// Overwrites `x` with `π_S[x]`.
    pub fn project_in_place(&self, x: &mut [f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { what: "projection input", expected: self.dim(), found: x.len() });
        }
        match self {
            Self::Ball { radius, .. } => {
                if !(*radius > 0.0) {
                    return Err(Error::InvalidSet(format!("ball radius must be positive, got {radius}")));
                }
                let n = norm2(x);
                if n > *radius {
                    let s = radius / n;
                    x.iter_mut().for_each(|v| *v *= s);
                }
            }
            Self::Box { lower, upper } => {
                for ((v, l), u) in x.iter_mut().zip(lower).zip(upper) {
                    *v = v.max(*l).min(*u);
                }
            }
            Self::Halfspace { normal, offset } => {
                let nn = dot(normal, normal);
                if nn == 0.0 {
                    return Err(Error::InvalidSet("halfspace normal must be nonzero".into()));
                }
                let excess = dot(normal, x) - offset;
                if excess > 0.0 {
                    axpy(-excess / nn, normal, x);
                }
            }
            Self::SecondOrderCone { .. } => project_soc(x),
            Self::Epigraph { f } => {
                let lift = EpigraphLift(f.as_ref());
                project_level_set(&lift, 0.0, x)?;
            }
            Self::Sublevel { f, level } => project_level_set(f.as_ref(), *level, x)?,
            Self::Product(p) => {
                for (s, w) in p.factors.iter().zip(p.offsets.windows(2)) {
                    s.project_in_place(&mut x[w[0]..w[1]])?;
                }
            }
            Self::Whole { .. } => {}
        }
        Ok(())
    }
}

fn project_soc(x: &mut [f64]) {
    let n = x.len() - 1;
    let t = x[n];
    let ny = norm2(&x[..n]);
    if ny <= -t {
        x.iter_mut().for_each(|v| *v = 0.0);
    } else if ny <= t {
        // inside
    } else {
        let c = (ny + t) / (2.0 * ny);
        x[..n].iter_mut().for_each(|v| *v *= c);
        x[n] = c * ny;
    }
}

/// Projection onto `{x : f(x) ≤ level}` for a function handle; `x` unchanged if inside.
pub fn project_sublevel(f: &dyn ConvexFunction, level: f64, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != f.dim() {
        return Err(Error::DimensionMismatch { what: "sublevel projection input", expected: f.dim(), found: x.len() });
    }
    let mut out = x.to_vec();
    project_level_set(f, level, &mut out)?;
    Ok(out)
}

fn project_level_set(f: &dyn ConvexFunction, level: f64, x: &mut [f64]) -> Result<()> {
    let excess = f.value(x) - level;
    if excess <= 0.0 {
        return Ok(());
    }
    let tol = LEVEL_BAND * level.abs().max(1.0);
    let origin = x.to_vec();
    let mut solver = ProxSolver::new(f, &origin);

    // ψ(μ) = f(prox_{μf}(x)) − level is continuous and nonincreasing with ψ(0) > 0.
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut iterations = 0;
    let mut psi_hi;
    loop {
        iterations += 1;
        psi_hi = solver.evaluate(hi) - level;
        if (-tol..=0.0).contains(&psi_hi) {
            x.copy_from_slice(&solver.y);
            return Ok(());
        }
        if psi_hi < 0.0 {
            break;
        }
        if iterations >= LEVEL_MAX_ITERATIONS {
            return Err(Error::RootFinding { iterations, lo, hi });
        }
        lo = hi;
        hi *= 2.0;
    }

    // Newton on μ, guarded by bisection whenever the step leaves the bracket
    // or fails to halve the bracket width. Only points with
    // −tol ≤ ψ ≤ 0 are accepted so the result is always feasible.
    let mut mu = 0.5 * (lo + hi);
    let mut last_width = hi - lo;
    let mut overshoot: f64 = 1.0;
    while iterations < LEVEL_MAX_ITERATIONS {
        iterations += 1;
        let psi = solver.evaluate(mu) - level;
        if (-tol..=0.0).contains(&psi) {
            x.copy_from_slice(&solver.y);
            return Ok(());
        }
        if psi > 0.0 {
            lo = mu;
        } else {
            hi = mu;
        }
        let slope = solver.level_derivative(mu);
        // just outside: aim past the root, further each time, so the iterate
        // crosses into the set instead of creeping up on the boundary
        let near = psi > 0.0 && psi <= tol;
        overshoot = if near { 2.0 * overshoot.max(1.0) } else { 1.0 };
        let newton = if slope < 0.0 {
            let step = -overshoot * psi / slope;
            mu + if near { step.max(4.0 * f64::EPSILON * mu) } else { step }
        } else {
            f64::NAN
        };
        let width = hi - lo;
        mu = if newton > lo && newton < hi && (near || width <= 0.5 * last_width) {
            newton
        } else {
            0.5 * (lo + hi)
        };
        last_width = width;
        if width <= f64::EPSILON * hi.max(1.0) {
            // Bracket exhausted at machine precision; take the feasible end.
            let _ = solver.evaluate(hi);
            x.copy_from_slice(&solver.y);
            return Ok(());
        }
    }
    Err(Error::RootFinding { iterations, lo, hi })
}

/// Solves the resolvent `y + μ∇f(y) = x` by damped Newton, the Newton system
/// handled matrix-free with conjugate gradients on `I + μ∇²f(y)`.
struct ProxSolver<'a> {
    f: &'a dyn ConvexFunction,
    x: &'a [f64],
    y: Vec<f64>,
    grad: Vec<f64>,
    scratch: Vec<f64>,
}

impl<'a> ProxSolver<'a> {
    fn new(f: &'a dyn ConvexFunction, x: &'a [f64]) -> Self {
        let n = x.len();
        Self { f, x, y: x.to_vec(), grad: vec![0.0; n], scratch: vec![0.0; n] }
    }

    fn merit(&self, mu: f64, y: &[f64]) -> f64 {
        let d: f64 = y.iter().zip(self.x).map(|(a, b)| (a - b) * (a - b)).sum();
        mu * self.f.value(y) + 0.5 * d
    }

    fn residual_norm(&mut self, mu: f64, y: &[f64]) -> f64 {
        self.f.gradient(y, &mut self.scratch);
        y.iter().zip(self.x).zip(&self.scratch).map(|((a, b), g)| (a - b + mu * g).powi(2)).sum::<f64>().sqrt()
    }

    /// Sets `self.y = prox_{μf}(x)` (warm-started) and returns `f(y)`.
    fn evaluate(&mut self, mu: f64) -> f64 {
        let n = self.x.len();
        let scale = norm2(self.x).max(1.0);
        let mut residual = vec![0.0; n];
        for _ in 0..100 {
            self.f.gradient(&self.y, &mut self.grad);
            for i in 0..n {
                residual[i] = self.y[i] - self.x[i] + mu * self.grad[i];
            }
            if norm2(&residual) <= 1e-14 * scale {
                break;
            }
            let res_norm = norm2(&residual);
            let rhs: Vec<f64> = residual.iter().map(|r| -r).collect();
            let step = self.solve_shifted_hessian(mu, &rhs);
            let slope = dot(&residual, &step);
            let base = self.merit(mu, &self.y);
            let mut t = 1.0;
            let mut trial = self.y.clone();
            let mut accepted = false;
            for _ in 0..60 {
                for i in 0..n {
                    trial[i] = self.y[i] + t * step[i];
                }
                // the residual test takes over once merit changes drop below rounding
                if self.merit(mu, &trial) <= base + 1e-4 * t * slope || self.residual_norm(mu, &trial) < (1.0 - 1e-4 * t) * res_norm {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
            let moved = t * norm2(&step);
            self.y.copy_from_slice(&trial);
            if moved <= 1e-16 * scale {
                break;
            }
        }
        self.f.value(&self.y)
    }

    /// `d/dμ f(prox_{μf}(x)) = −∇f(y)ᵀ (I + μ∇²f(y))⁻¹ ∇f(y)` at the current `y`.
    fn level_derivative(&mut self, mu: f64) -> f64 {
        self.f.gradient(&self.y, &mut self.grad);
        let g = self.grad.clone();
        let s = self.solve_shifted_hessian(mu, &g);
        -dot(&g, &s)
    }

    /// Conjugate gradients on `(I + μ∇²f(y)) s = b`.
    fn solve_shifted_hessian(&mut self, mu: f64, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let mut s = vec![0.0; n];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let target = 1e-30_f64.max(1e-28 * rr);
        for _ in 0..(4 * n + 20) {
            if rr <= target {
                break;
            }
            self.f.hessian_vec(&self.y, &p, &mut self.scratch);
            let ap: Vec<f64> = p.iter().zip(&self.scratch).map(|(pi, hi)| pi + mu * hi).collect();
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let step = rr / pap;
            axpy(step, &p, &mut s);
            axpy(-step, &ap, &mut r);
            let rr_new = dot(&r, &r);
            let beta = rr_new / rr;
            rr = rr_new;
            for (pi, ri) in p.iter_mut().zip(&r) {
                *pi = ri + beta * *pi;
            }
        }
        s
    }
}

// JSON descriptors. Function-valued sets have no wire form.

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum SetDescriptor {
    Ball { radius: f64, dim: usize },
    Box { lower: Vec<Option<f64>>, upper: Vec<Option<f64>> },
    Halfspace { normal: Vec<f64>, offset: f64 },
    Soc { dim: usize },
    Product { factors: Vec<SetDescriptor> },
    Whole { dim: usize },
}

fn finite_or_none(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl TryFrom<&ConvexSet> for SetDescriptor {
    type Error = Error;

    fn try_from(set: &ConvexSet) -> Result<Self> {
        Ok(match set {
            ConvexSet::Ball { dim, radius } => Self::Ball { radius: *radius, dim: *dim },
            ConvexSet::Box { lower, upper } => Self::Box {
                lower: lower.iter().copied().map(finite_or_none).collect(),
                upper: upper.iter().copied().map(finite_or_none).collect(),
            },
            ConvexSet::Halfspace { normal, offset } => Self::Halfspace { normal: normal.clone(), offset: *offset },
            ConvexSet::SecondOrderCone { dim } => Self::Soc { dim: *dim },
            ConvexSet::Product(p) => Self::Product {
                factors: p.factors.iter().map(SetDescriptor::try_from).collect::<Result<_>>()?,
            },
            ConvexSet::Whole { dim } => Self::Whole { dim: *dim },
            ConvexSet::Epigraph { .. } | ConvexSet::Sublevel { .. } => {
                return Err(Error::Serialization("function-valued sets have no JSON descriptor".into()))
            }
        })
    }
}

impl TryFrom<SetDescriptor> for ConvexSet {
    type Error = Error;

    fn try_from(d: SetDescriptor) -> Result<Self> {
        match d {
            SetDescriptor::Ball { radius, dim } => ConvexSet::ball(dim, radius),
            SetDescriptor::Box { lower, upper } => ConvexSet::boxed(
                lower.into_iter().map(|v| v.unwrap_or(f64::NEG_INFINITY)).collect(),
                upper.into_iter().map(|v| v.unwrap_or(f64::INFINITY)).collect(),
            ),
            SetDescriptor::Halfspace { normal, offset } => ConvexSet::halfspace(normal, offset),
            SetDescriptor::Soc { dim } => ConvexSet::soc(dim),
            SetDescriptor::Product { factors } => Ok(ConvexSet::product(
                factors.into_iter().map(ConvexSet::try_from).collect::<Result<_>>()?,
            )),
            SetDescriptor::Whole { dim } => Ok(ConvexSet::whole(dim)),
        }
    }
}

impl Serialize for ConvexSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SetDescriptor::try_from(self).map_err(serde::ser::Error::custom)?.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConvexSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        ConvexSet::try_from(SetDescriptor::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
