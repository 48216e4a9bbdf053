//! Solver identifiers and construction behind the common [`Iteration`] interface.

use std::fmt;
use std::str::FromStr;

use pipg::baselines::{default_const_steps, Admm, ChambollePockAccel, ChambollePockConst, DualFastGradient};
use pipg::{Iteration, Pipg, QpProblem, SolverState, SpectralBounds, StepSchedule};
use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SolverId {
    #[serde(rename = "pipg-const")]
    PipgConst,
    #[serde(rename = "pipg-var")]
    PipgVar,
    #[serde(rename = "dfg")]
    Dfg,
    #[serde(rename = "admm")]
    Admm,
    #[serde(rename = "cp-const")]
    CpConst,
    #[serde(rename = "cp-accel")]
    CpAccel,
}

impl SolverId {
    pub const ALL: [SolverId; 6] = [Self::PipgConst, Self::PipgVar, Self::Dfg, Self::Admm, Self::CpConst, Self::CpAccel];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::PipgConst => "pipg-const",
            Self::PipgVar => "pipg-var",
            Self::Dfg => "dfg",
            Self::Admm => "admm",
            Self::CpConst => "cp-const",
            Self::CpAccel => "cp-accel",
        }
    }

    /// Methods that ignore strong convexity and are left out of tight-tolerance
    /// sweeps unless listed explicitly.
    pub fn is_slow(self) -> bool {
        matches!(self, Self::PipgConst | Self::CpConst)
    }
}

impl fmt::Display for SolverId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverId {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| BenchError::Config(format!("unknown solver '{s}' (expected one of pipg-const, pipg-var, dfg, admm, cp-const, cp-accel)")))
    }
}

/// Per-method knobs that are not derived from the spectral bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub admm_alpha: f64,
    pub dfg_inner_tol: f64,
    pub dfg_max_inner: usize,
    /// `β` of the constant PIPG schedule; `None` means `√(λ/σ)`.
    pub pipg_beta: Option<f64>,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { admm_alpha: 2.0, dfg_inner_tol: 1e-3, dfg_max_inner: pipg::baselines::dfg::DEFAULT_MAX_INNER, pipg_beta: None }
    }
}

/// Builds `id` on `problem` starting from `init`.
pub fn build<'a>(
    id: SolverId,
    problem: &'a QpProblem,
    bounds: &SpectralBounds,
    init: (Vec<f64>, Vec<f64>),
    settings: &SolverSettings,
) -> pipg::Result<Box<dyn Iteration + Send + 'a>> {
    Ok(match id {
        SolverId::PipgConst => {
            let schedule = match settings.pipg_beta {
                Some(beta) => StepSchedule::constant(*bounds, beta)?,
                None => StepSchedule::constant_default(*bounds),
            };
            Box::new(Pipg::new(problem, schedule, SolverState::new(problem, init.0, init.1)?))
        }
        SolverId::PipgVar => {
            let schedule = StepSchedule::varying(*bounds)?;
            Box::new(Pipg::new(problem, schedule, SolverState::new(problem, init.0, init.1)?))
        }
        SolverId::Dfg => Box::new(DualFastGradient::new(problem, *bounds, init, settings.dfg_inner_tol)?.with_max_inner(settings.dfg_max_inner)),
        SolverId::Admm => Box::new(Admm::new(problem, settings.admm_alpha, init)?),
        SolverId::CpConst => {
            let (alpha, beta) = default_const_steps(bounds);
            Box::new(ChambollePockConst::new(problem, bounds, alpha, beta, init)?)
        }
        SolverId::CpAccel => Box::new(ChambollePockAccel::new(problem, bounds, init)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_roundtrip_through_text_and_json() {
        for id in SolverId::ALL {
            assert_eq!(id.as_str().parse::<SolverId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(json, format!("\"{id}\""));
        }
        assert!("pipg".parse::<SolverId>().is_err());
    }

    #[test]
    fn every_solver_builds_on_the_benchmark() {
        let qp = pipg::build_benchmark(3).unwrap().lift().unwrap();
        let bounds = pipg::estimate_bounds(&qp, 1e-4).unwrap();
        for id in SolverId::ALL {
            let mut s = build(id, &qp, &bounds, (vec![0.0; qp.dim()], vec![0.0; qp.num_constraints()]), &SolverSettings::default()).unwrap();
            s.step().unwrap();
            assert_eq!(s.iterations(), 1);
            assert!(s.projections() >= 1);
        }
    }
}
