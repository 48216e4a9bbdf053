//! ADMM splitting `Gy = g` from `z ∈ Z`, in scaled form:
//!
//! ```text
//!     yᵏ⁺¹ = argmin_{Gy=g} ½yᵀHy + hᵀy + (1/2α)‖y − zᵏ + uᵏ‖²
//!     zᵏ⁺¹ = Π_Z[yᵏ⁺¹ + uᵏ]
//!     uᵏ⁺¹ = uᵏ + yᵏ⁺¹ − zᵏ⁺¹
//! ```
//!
//! The y-update solves
//!
//! ```text
//!     [ H + I/α   Gᵀ ] [ y ]   [ −h + (zᵏ − uᵏ)/α ]
//!     [ G         0  ] [ v ] = [ g                ]
//! ```
//!
//! with one banded LDLᵀ computed up front. The multiplier `v` is reported as
//! the dual estimate for `Gz = g`.

use crate::error::{Error, Result};
use crate::ldl::SaddleFactor;
use crate::linalg::all_finite;
use crate::problem::QpProblem;
use crate::trace::{run, ConvergenceTrace, Iteration, Solution, StoppingRule, TraceOptions, UniformAverage};

#[derive(Debug, Clone)]
pub struct Admm<'a> {
    problem: &'a QpProblem,
    alpha: f64,
    factor: SaddleFactor,
    factorizations: usize,
    z: Vec<f64>,
    y: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    k: usize,
    average: UniformAverage,
    projections: u64,
    last_solve_residual: f64,
    max_solve_residual: f64,
    rhs: Vec<f64>,
    sol: Vec<f64>,
    back: Vec<f64>,
}

impl<'a> Admm<'a> {
    /// Starts from `z = init.0`, `u = 0`; `init.1` seeds the reported
    /// multiplier until the first step.
    pub fn new(problem: &'a QpProblem, alpha: f64, init: (Vec<f64>, Vec<f64>)) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("ADMM step must be positive, got {alpha}")));
        }
        let (n, m) = (problem.dim(), problem.num_constraints());
        let (z, w) = init;
        if z.len() != n {
            return Err(Error::DimensionMismatch { what: "initial z", expected: n, found: z.len() });
        }
        if w.len() != m {
            return Err(Error::DimensionMismatch { what: "initial w", expected: m, found: w.len() });
        }
        let factor = SaddleFactor::new(problem.hessian(), 1.0 / alpha, problem.constraints())?;
        Ok(Self {
            problem,
            alpha,
            factor,
            factorizations: 1,
            y: z.clone(),
            z,
            u: vec![0.0; n],
            v: w,
            k: 0,
            average: UniformAverage::new(n),
            projections: 0,
            last_solve_residual: 0.0,
            max_solve_residual: 0.0,
            rhs: vec![0.0; n + m],
            sol: vec![0.0; n + m],
            back: vec![0.0; n + m],
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Changes `α`; refactors only if it differs from the current value.
    pub fn set_alpha(&mut self, alpha: f64) -> Result<()> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("ADMM step must be positive, got {alpha}")));
        }
        if alpha != self.alpha {
            self.factor = SaddleFactor::new(self.problem.hessian(), 1.0 / alpha, self.problem.constraints())?;
            self.factorizations += 1;
            self.alpha = alpha;
        }
        Ok(())
    }

    /// Number of LDLᵀ factorizations performed so far.
    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    pub fn factor(&self) -> &SaddleFactor {
        &self.factor
    }

    /// `‖K·sol − rhs‖_∞` of the latest linear solve.
    pub fn last_solve_residual(&self) -> f64 {
        self.last_solve_residual
    }

    pub fn max_solve_residual(&self) -> f64 {
        self.max_solve_residual
    }

    /// Iterate of the equality-constrained block.
    pub fn y(&self) -> &[f64] {
        &self.y
    }

    fn kkt_apply(&mut self) {
        let p = self.problem;
        let n = p.dim();
        let (top, bottom) = self.back.split_at_mut(n);
        let (ys, vs) = self.sol.split_at(n);
        p.hessian().mul_vec_into(ys, top);
        for (t, y) in top.iter_mut().zip(ys) {
            *t += y / self.alpha;
        }
        p.constraints().tmul_vec_acc(1.0, vs, top);
        p.constraints().mul_vec_into(ys, bottom);
    }
}

impl Iteration for Admm<'_> {
    fn problem(&self) -> &QpProblem {
        self.problem
    }

    fn step(&mut self) -> Result<()> {
        let p = self.problem;
        let n = p.dim();
        let inv = 1.0 / self.alpha;
        for (i, r) in self.rhs[..n].iter_mut().enumerate() {
            *r = -p.linear()[i] + inv * (self.z[i] - self.u[i]);
        }
        self.rhs[n..].copy_from_slice(p.rhs());
        self.factor.solve(&self.rhs, &mut self.sol);
        self.kkt_apply();
        let res = self.back.iter().zip(&self.rhs).map(|(b, r)| (b - r).abs()).fold(0.0, f64::max);
        self.last_solve_residual = res;
        self.max_solve_residual = self.max_solve_residual.max(res);

        self.y.copy_from_slice(&self.sol[..n]);
        self.v.copy_from_slice(&self.sol[n..]);
        for ((z, y), u) in self.z.iter_mut().zip(&self.y).zip(&self.u) {
            *z = y + u;
        }
        p.set().project_in_place(&mut self.z)?;
        self.projections += 1;
        for ((u, y), z) in self.u.iter_mut().zip(&self.y).zip(&self.z) {
            *u += y - z;
        }
        self.average.push(&self.z);
        self.k += 1;
        if !all_finite(&self.z) || !all_finite(&self.u) || !all_finite(&self.v) {
            return Err(Error::NonFinite { iteration: self.k });
        }
        Ok(())
    }

    fn iterations(&self) -> usize {
        self.k
    }
    fn primal(&self) -> &[f64] {
        &self.z
    }
    fn dual(&self) -> &[f64] {
        &self.v
    }
    fn averaged(&self) -> &[f64] {
        &self.average.mean
    }
    fn projections(&self) -> u64 {
        self.projections
    }
}

pub fn solve(
    problem: &QpProblem,
    alpha: f64,
    init: (Vec<f64>, Vec<f64>),
    stop: &StoppingRule,
    trace: &TraceOptions,
) -> Result<(Solution, ConvergenceTrace)> {
    run(&mut Admm::new(problem, alpha, init)?, stop, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;
    use crate::projections::ConvexSet;

    #[test]
    fn equality_qp_reaches_kkt_point() {
        // min ½‖z‖² + (1, −1, 0)ᵀz  s.t. z₁ + z₂ + z₃ = 3
        let h = DenseMatrix::identity(3);
        let g = DenseMatrix::from_rows(&[vec![1.0, 1.0, 1.0]]).unwrap();
        let p = QpProblem::new(&h, vec![1.0, -1.0, 0.0], &g, vec![3.0], ConvexSet::whole(3)).unwrap();
        let (sol, _) = solve(&p, 2.0, (vec![0.0; 3], vec![0.0]), &StoppingRule::iterations(200), &TraceOptions::off()).unwrap();
        // z = −h − w·1 with Σz = 3 ⇒ w = −1, z = (0, 2, 1)
        let expected = [0.0, 2.0, 1.0];
        for (z, e) in sol.z.iter().zip(expected) {
            assert!((z - e).abs() <= 1e-9, "{:?}", sol.z);
        }
        assert!((sol.w[0] + 1.0).abs() <= 1e-9);
    }

    #[test]
    fn factors_once_and_refactors_only_on_change() {
        let tp = crate::mpc::build_benchmark(4).unwrap();
        let p = tp.lift().unwrap();
        let (n, m) = (p.dim(), p.num_constraints());
        let mut admm = Admm::new(&p, 2.0, (vec![0.0; n], vec![0.0; m])).unwrap();
        for _ in 0..30 {
            admm.step().unwrap();
            assert!(admm.last_solve_residual() <= 1e-10);
        }
        assert_eq!(admm.factorizations(), 1);
        admm.set_alpha(2.0).unwrap();
        assert_eq!(admm.factorizations(), 1);
        admm.set_alpha(1.0).unwrap();
        assert_eq!(admm.factorizations(), 2);
        assert_eq!(admm.projections(), 30);
    }

    #[test]
    fn rank_deficient_constraints_fail_to_factor() {
        let g = DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        let p = QpProblem::new(&DenseMatrix::identity(2), vec![0.0; 2], &g, vec![1.0, -1.0], ConvexSet::whole(2)).unwrap();
        assert!(matches!(Admm::new(&p, 2.0, (vec![0.0; 2], vec![0.0; 2])), Err(Error::SingularKkt { .. })));
        assert!(Admm::new(&p, -1.0, (vec![0.0; 2], vec![0.0; 2])).is_err());
    }
}
