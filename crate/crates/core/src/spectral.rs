//! Spectral bounds `μ I ⪯ H ⪯ λ I` and `GᵀG ⪯ σ I` consumed by every step-size rule.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, CsrMatrix};
use crate::problem::QpProblem;

/// Relative change of the Rayleigh quotient, and relative eigen-residual, at
/// which power iteration stops.
pub const POWER_TOLERANCE: f64 = 1e-6;
pub const POWER_MAX_ITERATIONS: usize = 5000;
const POWER_SEED: u64 = 0x5eed_b0a7_d5e7_a1c3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralBounds {
    pub mu: f64,
    pub lambda: f64,
    pub sigma: f64,
}

impl SpectralBounds {
    pub fn new(mu: f64, lambda: f64, sigma: f64) -> Result<Self> {
        if !(mu >= 0.0 && mu <= lambda && lambda > 0.0 && sigma > 0.0) {
            return Err(Error::Config(format!(
                "spectral bounds need 0 ≤ μ ≤ λ, λ > 0, σ > 0 (got μ={mu}, λ={lambda}, σ={sigma})"
            )));
        }
        Ok(Self { mu, lambda, sigma })
    }

    pub fn is_strongly_convex(&self) -> bool {
        self.mu > 0.0
    }

    /// Same bounds scaled outward by `factor ≥ 1` (μ shrinks, λ and σ grow).
    pub fn inflated(&self, factor: f64) -> Self {
        Self { mu: self.mu / factor, lambda: self.lambda * factor, sigma: self.sigma * factor }
    }
}

/// Estimates valid bounds for `problem`.
///
/// Diagonal `H` is read off exactly. Otherwise `λ` comes from power iteration
/// on `H` and `μ` from power iteration on `λI − H`. `σ` uses alternating
/// `G`/`Gᵀ` products and never forms `GᵀG`. Upper bounds are the power
/// estimates inflated by `1 + tolerance`.
pub fn estimate_bounds(problem: &QpProblem, tolerance: f64) -> Result<SpectralBounds> {
    if !(tolerance > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {tolerance}")));
    }
    let h = problem.hessian();
    let (mu, lambda) = match h.diagonal_only() {
        Some(diag) => {
            let lo = diag.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = diag.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo.max(0.0), hi)
        }
        None => hessian_bounds(h, tolerance)?,
    };
    let lambda = if lambda > 0.0 { lambda } else { f64::EPSILON };

    let g = problem.constraints();
    let sigma = if g.nnz() == 0 {
        1.0
    } else {
        let gt_g = |v: &[f64], out: &mut [f64]| {
            let gv = g.mul_vec(v);
            g.tmul_vec_into(&gv, out);
        };
        power_iteration(g.cols(), gt_g)? * (1.0 + tolerance)
    };
    SpectralBounds::new(mu, lambda, sigma)
}

fn hessian_bounds(h: &CsrMatrix, tolerance: f64) -> Result<(f64, f64)> {
    let top = power_iteration(h.rows(), |v, out| h.mul_vec_into(v, out))?;
    let lambda = top * (1.0 + tolerance);
    if lambda <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let shifted = |v: &[f64], out: &mut [f64]| {
        h.mul_vec_into(v, out);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = lambda * vi - *o;
        }
    };
    // λ_max(λI − H) = λ − λ_min(H); inflating it keeps μ a lower bound.
    let gap = power_iteration(h.rows(), shifted)? * (1.0 + tolerance);
    let mu = lambda - gap;
    if mu <= 1e-9 * lambda {
        Ok((0.0, lambda))
    } else {
        Ok((mu, lambda))
    }
}

/// Largest eigenvalue of a symmetric positive semidefinite operator.
pub fn power_iteration(n: usize, mut apply: impl FnMut(&[f64], &mut [f64])) -> Result<f64> {
    if n == 0 {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let nv = norm2(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut av = vec![0.0; n];
    let mut rayleigh = 0.0;
    for _ in 0..POWER_MAX_ITERATIONS {
        apply(&v, &mut av);
        let next = dot(&v, &av);
        let norm = norm2(&av);
        if norm == 0.0 {
            return Ok(0.0);
        }
        // ‖Av − ρv‖² = ‖Av‖² − ρ² for unit v. A small Rayleigh change alone
        // can stall on clustered spectra well short of the top eigenvalue.
        let residual = (norm * norm - next * next).max(0.0).sqrt();
        let converged = (next - rayleigh).abs() <= POWER_TOLERANCE * next.abs() && residual <= POWER_TOLERANCE * next.abs();
        rayleigh = next;
        for (vi, ai) in v.iter_mut().zip(&av) {
            *vi = ai / norm;
        }
        if converged {
            return Ok(rayleigh);
        }
    }
    Err(Error::PowerIteration { iterations: POWER_MAX_ITERATIONS, rayleigh })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::projections::ConvexSet;

    fn problem(h: DenseMatrix, g: DenseMatrix) -> QpProblem {
        let n = h.rows();
        let m = g.rows();
        QpProblem::new(&h, vec![0.0; n], &g, vec![0.0; m], ConvexSet::whole(n)).unwrap()
    }

    #[test]
    fn diagonal_fast_path_is_exact() {
        let p = problem(DenseMatrix::from_diagonal(&[1.0, 0.5, 1.0, 0.5]), DenseMatrix::zeros(0, 4));
        let b = estimate_bounds(&p, 1e-3).unwrap();
        assert_eq!((b.mu, b.lambda), (0.5, 1.0));
        let p = problem(DenseMatrix::identity(3), DenseMatrix::zeros(0, 3));
        let b = estimate_bounds(&p, 1e-3).unwrap();
        assert_eq!((b.mu, b.lambda), (1.0, 1.0));
    }

    #[test]
    fn dense_hessian_bounds_bracket_spectrum() {
        // eigenvalues of [[2, 1], [1, 2]] are 1 and 3
        let h = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let g = DenseMatrix::from_rows(&[vec![1.0, 1.0]]).unwrap();
        let b = estimate_bounds(&problem(h, g), 1e-4).unwrap();
        assert!(b.lambda >= 3.0 && b.lambda <= 3.0 * (1.0 + 2e-4));
        assert!(b.mu <= 1.0 && b.mu >= 0.99);
        assert!(b.sigma >= 2.0 && b.sigma <= 2.0 * (1.0 + 2e-4));
    }

    #[test]
    fn singular_hessian_reports_zero_mu() {
        let h = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let b = estimate_bounds(&problem(h, DenseMatrix::zeros(0, 2)), 1e-4).unwrap();
        assert_eq!(b.mu, 0.0);
        assert!(!b.is_strongly_convex());
    }

    #[test]
    fn rejects_nonpositive_tolerance() {
        let p = problem(DenseMatrix::identity(2), DenseMatrix::zeros(0, 2));
        assert!(estimate_bounds(&p, 0.0).is_err());
    }

    #[test]
    fn bounds_validation() {
        assert!(SpectralBounds::new(2.0, 1.0, 1.0).is_err());
        assert!(SpectralBounds::new(0.0, 1.0, 0.0).is_err());
        let b = SpectralBounds::new(0.5, 1.0, 2.0).unwrap().inflated(2.0);
        assert_eq!((b.mu, b.lambda, b.sigma), (0.25, 2.0, 4.0));
    }
}
