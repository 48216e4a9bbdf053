//! Sweep configuration, read from JSON.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::solvers::{SolverId, SolverSettings};
use crate::BenchError;

/// Tolerances at or below this drop the slow constant-step methods from the
/// default solver list.
pub const TIGHT_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitDistribution {
    #[default]
    StandardNormal,
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    /// Explicit solver list, run at every tolerance. When absent, all six run,
    /// except that pipg-const and cp-const are skipped at tight tolerances.
    #[serde(default)]
    pub solvers: Option<Vec<SolverId>>,
    #[serde(default = "default_tolerances")]
    pub tolerances: Vec<f64>,
    #[serde(default = "default_num_seeds")]
    pub num_seeds: usize,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default)]
    pub init_distribution: InitDistribution,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    /// Per-solver overrides of `max_iterations`.
    #[serde(default)]
    pub max_iterations_by_solver: BTreeMap<SolverId, usize>,
    #[serde(default)]
    pub settings: SolverSettings,
    #[serde(default = "default_spectral_tolerance")]
    pub spectral_tolerance: f64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_horizons() -> Vec<usize> {
    vec![5, 15, 25]
}
fn default_tolerances() -> Vec<f64> {
    vec![1e-3, 1e-5]
}
fn default_num_seeds() -> usize {
    20
}
fn default_max_iterations() -> usize {
    2_000_000
}
fn default_spectral_tolerance() -> f64 {
    1e-4
}
fn default_output() -> PathBuf {
    PathBuf::from("sweep.csv")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |msg: &str| Err(BenchError::Config(msg.to_string()));
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return fail("horizons must be a nonempty list of positive integers");
        }
        if self.tolerances.is_empty() || self.tolerances.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return fail("tolerances must be a nonempty list of positive numbers");
        }
        if self.solvers.as_ref().is_some_and(Vec::is_empty) {
            return fail("solvers must not be empty");
        }
        if self.num_seeds == 0 {
            return fail("num_seeds must be positive");
        }
        if self.max_iterations == 0 || self.max_iterations_by_solver.values().any(|&n| n == 0) {
            return fail("max_iterations must be positive");
        }
        if !(self.spectral_tolerance > 0.0) {
            return fail("spectral_tolerance must be positive");
        }
        Ok(())
    }

    /// Solvers run at tolerance `eps`.
    pub fn solvers_at(&self, eps: f64) -> Vec<SolverId> {
        match &self.solvers {
            Some(list) => list.clone(),
            None => SolverId::ALL.into_iter().filter(|s| eps > TIGHT_TOLERANCE || !s.is_slow()).collect(),
        }
    }

    pub fn max_iterations_for(&self, id: SolverId) -> usize {
        self.max_iterations_by_solver.get(&id).copied().unwrap_or(self.max_iterations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_desk_scale() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.horizons, vec![5, 15, 25]);
        assert_eq!(cfg.num_seeds, 20);
        assert_eq!(cfg.init_distribution, InitDistribution::StandardNormal);
        cfg.validate().unwrap();
    }

    #[test]
    fn tight_tolerance_drops_slow_solvers_unless_listed() {
        let cfg = ExperimentConfig::default();
        let loose = cfg.solvers_at(1e-3);
        let tight = cfg.solvers_at(1e-5);
        assert!(loose.contains(&SolverId::PipgConst) && loose.contains(&SolverId::CpConst));
        assert!(!tight.contains(&SolverId::PipgConst) && !tight.contains(&SolverId::CpConst));
        assert_eq!(tight.len(), 4);

        let cfg = ExperimentConfig::from_json(r#"{"solvers": ["pipg-const", "pipg-var"]}"#).unwrap();
        assert_eq!(cfg.solvers_at(1e-5), vec![SolverId::PipgConst, SolverId::PipgVar]);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for bad in [
            r#"{"horizons": []}"#,
            r#"{"tolerances": [0.001, -1]}"#,
            r#"{"num_seeds": 0}"#,
            r#"{"solvers": []}"#,
            r#"{"solvers": ["newton"]}"#,
            r#"{"init_distribution": "uniform"}"#,
            r#"{"typo_field": 1}"#,
        ] {
            assert!(ExperimentConfig::from_json(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn per_solver_iteration_caps() {
        let cfg = ExperimentConfig::from_json(r#"{"max_iterations": 100, "max_iterations_by_solver": {"admm": 7}}"#).unwrap();
        assert_eq!(cfg.max_iterations_for(SolverId::Admm), 7);
        assert_eq!(cfg.max_iterations_for(SolverId::Dfg), 100);
    }
}
