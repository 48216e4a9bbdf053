//! Reference solutions certified by two independent solver families.

use pipg::baselines::admm;
use pipg::{estimate_bounds, solver, KktResidual, QpProblem, StepSchedule, StoppingRule, TraceOptions};
use serde::{Deserialize, Serialize};

use crate::{relative_distance, BenchError, SolverId};

/// ADMM penalty used by the oracle. At α = 2 ADMM stalls well above 1e-10 on
/// the benchmark.
pub const REFERENCE_ADMM_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceOptions {
    pub kkt_tolerance: f64,
    pub max_iterations: usize,
    /// Largest accepted relative distance between the two candidates.
    pub agreement: f64,
    /// Every certified residual of `(z⋆, w⋆)` must be below this.
    pub certify: f64,
    pub admm_alpha: f64,
    pub spectral_tolerance: f64,
    pub kkt_check_every: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-10,
            max_iterations: 1_000_000,
            agreement: 1e-7,
            certify: 1e-9,
            admm_alpha: REFERENCE_ADMM_ALPHA,
            spectral_tolerance: 1e-4,
            kkt_check_every: 50,
        }
    }
}

/// One solver's answer, kept whether or not certification succeeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub solver: SolverId,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: KktResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    pub z_star: Vec<f64>,
    pub w_star: Vec<f64>,
    pub certified_residuals: KktResidual,
    pub producing_solvers: Vec<SolverId>,
    /// Relative distance between the two candidate primal solutions.
    pub agreement: f64,
}

impl ReferenceSolution {
    pub fn to_json(&self) -> Result<String, BenchError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, BenchError> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Solves `problem` with varying-step PIPG and ADMM and certifies agreement.
///
/// `(z⋆, w⋆)` is the PIPG pair.
pub fn compute_reference(problem: &QpProblem, opts: &ReferenceOptions) -> Result<ReferenceSolution, BenchError> {
    let bounds = estimate_bounds(problem, opts.spectral_tolerance)?;
    let init = || (vec![0.0; problem.dim()], vec![0.0; problem.num_constraints()]);
    let stop = StoppingRule::iterations(opts.max_iterations).with_kkt(opts.kkt_tolerance, opts.kkt_check_every);

    let (pipg, _) = solver::solve(problem, StepSchedule::varying(bounds)?, init(), &stop, &TraceOptions::off())?;
    let (admm, _) = admm::solve(problem, opts.admm_alpha, init(), &stop, &TraceOptions::off())?;

    let candidate = |solver, sol: pipg::Solution| -> Result<Candidate, BenchError> {
        Ok(Candidate {
            solver,
            residuals: problem.kkt_residual(&sol.z, &sol.w)?,
            converged: sol.reason.converged(),
            iterations: sol.iterations,
            z: sol.z,
            w: sol.w,
        })
    };
    let first = candidate(SolverId::PipgVar, pipg)?;
    let second = candidate(SolverId::Admm, admm)?;
    log::info!(
        "reference candidates: pipg-var {} iterations (kkt {:.2e}), admm {} iterations (kkt {:.2e})",
        first.iterations,
        first.residuals.max(),
        second.iterations,
        second.residuals.max()
    );

    let agreement = relative_distance(&second.z, &first.z);
    let failure = if !first.converged || !second.converged {
        Some(format!(
            "KKT tolerance {:e} not reached within {} iterations (pipg-var {:.3e}, admm {:.3e})",
            opts.kkt_tolerance,
            opts.max_iterations,
            first.residuals.max(),
            second.residuals.max()
        ))
    } else if !(agreement <= opts.agreement) {
        Some(format!("solvers disagree: relative distance {agreement:.3e} > {:e}", opts.agreement))
    } else if !first.residuals.within(opts.certify) {
        Some(format!("residuals {:?} exceed {:e}", first.residuals, opts.certify))
    } else {
        None
    };
    if let Some(reason) = failure {
        return Err(BenchError::Certification { reason, candidates: Box::new([first, second]) });
    }

    Ok(ReferenceSolution {
        certified_residuals: first.residuals,
        producing_solvers: vec![first.solver, second.solver],
        agreement,
        z_star: first.z,
        w_star: first.w,
    })
}
