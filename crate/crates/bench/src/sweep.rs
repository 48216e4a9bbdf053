//! Projections-to-tolerance sweeps over horizons, solvers and random starts.

use std::io::Write;
use std::path::{Path, PathBuf};

use pipg::{build_benchmark, estimate_bounds, run, QpProblem, SpectralBounds, StoppingRule, TraceOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::{solvers, BenchError, ExperimentConfig, InitDistribution, SolverId};

/// Starting point for seed index `index`: `z` then `w`, each entry drawn
/// from ChaCha8 seeded with `seed_base + index`.
pub fn initial_point(dist: InitDistribution, seed_base: u64, index: usize, n: usize, m: usize) -> (Vec<f64>, Vec<f64>) {
    match dist {
        InitDistribution::Zeros => (vec![0.0; n], vec![0.0; m]),
        InitDistribution::StandardNormal => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed_base.wrapping_add(index as u64));
            let z = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
            let w = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
            (z, w)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub solver: SolverId,
    pub epsilon: f64,
    /// Mean and sample standard deviation over the runs that converged;
    /// `NaN` when fewer than one (mean) or two (std) did.
    pub mean_projections: f64,
    pub std_projections: f64,
    pub failures: usize,
    /// Projection count per seed, `None` for a failed run.
    #[serde(skip)]
    pub runs: Vec<Option<u64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HorizonInfo {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub dim: usize,
    pub constraints: usize,
    pub bounds: SpectralBounds,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMetadata {
    pub config: ExperimentConfig,
    pub horizons: Vec<HorizonInfo>,
    pub rng: &'static str,
    pub package_version: &'static str,
    /// Projection counts per `(T, solver, epsilon)` row, one entry per seed.
    pub runs: Vec<Vec<Option<u64>>>,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub metadata: SweepMetadata,
}

struct Cell<'a> {
    row: usize,
    problem: &'a QpProblem,
    bounds: &'a SpectralBounds,
    solver: SolverId,
    epsilon: f64,
    seed: usize,
}

/// Runs every `(T, ε, solver, seed)` cell of `config` on `pool`.
///
/// Rows come out ordered by horizon, then tolerance (loosest first), then
/// solver in configuration order. Failed runs never abort the sweep.
pub fn run_sweep(config: &ExperimentConfig, pool: &rayon::ThreadPool) -> Result<SweepReport, BenchError> {
    config.validate()?;
    let mut horizons = config.horizons.clone();
    horizons.sort_unstable();
    horizons.dedup();
    let mut tolerances = config.tolerances.clone();
    tolerances.sort_by(|a, b| b.total_cmp(a));
    tolerances.dedup();

    let mut instances = Vec::with_capacity(horizons.len());
    for &t in &horizons {
        let qp = build_benchmark(t)?.lift()?;
        let bounds = estimate_bounds(&qp, config.spectral_tolerance)?;
        instances.push((t, qp, bounds));
    }

    let mut rows = Vec::new();
    let mut cells = Vec::new();
    for (t, qp, bounds) in &instances {
        for &eps in &tolerances {
            for solver in config.solvers_at(eps) {
                let row = rows.len();
                rows.push(SweepRow { horizon: *t, solver, epsilon: eps, mean_projections: f64::NAN, std_projections: f64::NAN, failures: 0, runs: Vec::new() });
                cells.extend((0..config.num_seeds).map(|seed| Cell { row, problem: qp, bounds, solver, epsilon: eps, seed }));
            }
        }
    }
    log::info!("sweep: {} runs in {} rows on {} threads", cells.len(), rows.len(), pool.current_num_threads());

    let outcomes: Vec<Option<u64>> = pool.install(|| cells.par_iter().map(|c| run_cell(config, c)).collect());

    for (cell, outcome) in cells.iter().zip(outcomes) {
        rows[cell.row].runs.push(outcome);
    }
    for row in &mut rows {
        let ok: Vec<f64> = row.runs.iter().flatten().map(|&p| p as f64).collect();
        row.failures = row.runs.len() - ok.len();
        (row.mean_projections, row.std_projections) = mean_std(&ok);
    }

    let metadata = SweepMetadata {
        config: config.clone(),
        horizons: instances
            .iter()
            .map(|(t, qp, b)| HorizonInfo { horizon: *t, dim: qp.dim(), constraints: qp.num_constraints(), bounds: *b })
            .collect(),
        rng: "ChaCha8 (rand_chacha), standard normal via rand_distr ziggurat",
        package_version: env!("CARGO_PKG_VERSION"),
        runs: rows.iter().map(|r| r.runs.clone()).collect(),
    };
    Ok(SweepReport { rows, metadata })
}

fn run_cell(config: &ExperimentConfig, c: &Cell<'_>) -> Option<u64> {
    let init = initial_point(config.init_distribution, config.seed_base, c.seed, c.problem.dim(), c.problem.num_constraints());
    let stop = StoppingRule::feasibility(c.epsilon, config.max_iterations_for(c.solver));
    let outcome = solvers::build(c.solver, c.problem, c.bounds, init, &config.settings).and_then(|mut s| run(&mut *s, &stop, &TraceOptions::off()));
    match outcome {
        Ok((sol, _)) if sol.reason.converged() => Some(sol.projections),
        Ok((sol, _)) => {
            log::debug!("{} at ε={} seed {}: no convergence after {} iterations", c.solver, c.epsilon, c.seed, sol.iterations);
            None
        }
        Err(e) => {
            log::warn!("{} at ε={} seed {}: {e}", c.solver, c.epsilon, c.seed);
            None
        }
    }
}

/// Mean and sample standard deviation.
fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), BenchError> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn row(&self, horizon: usize, solver: SolverId, epsilon: f64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.horizon == horizon && r.solver == solver && r.epsilon == epsilon)
    }

    /// Writes the CSV to `path` and the metadata JSON next to it.
    pub fn save(&self, path: &Path) -> Result<PathBuf, BenchError> {
        self.write_csv(std::fs::File::create(path)?)?;
        let meta = metadata_path(path);
        std::fs::write(&meta, serde_json::to_string_pretty(&self.metadata)?)?;
        Ok(meta)
    }
}

/// `sweep.csv` → `sweep.meta.json`.
pub fn metadata_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}
