//! Per-iteration convergence traces written as CSV.

use std::io::Write;

use pipg::{run, ConvergenceTrace, QpProblem, SpectralBounds, StoppingRule, TraceOptions};

use crate::{solvers, BenchError, SolverId, SolverSettings};

/// Runs `solver` for exactly `max_k` iterations and records every one.
///
/// Distances are measured against `reference` when given; without it only
/// feasibility is recorded.
pub fn run_trace(
    problem: &QpProblem,
    solver: SolverId,
    bounds: &SpectralBounds,
    settings: &SolverSettings,
    init: (Vec<f64>, Vec<f64>),
    max_k: usize,
    reference: Option<&[f64]>,
) -> Result<ConvergenceTrace, BenchError> {
    if max_k == 0 {
        return Err(BenchError::Config("max_k must be positive".into()));
    }
    if reference.is_some_and(|r| r.len() != problem.dim()) {
        return Err(BenchError::Config(format!("reference has length {}, problem dimension is {}", reference.unwrap().len(), problem.dim())));
    }
    let mut s = solvers::build(solver, problem, bounds, init, settings)?;
    let (_, trace) = run(&mut *s, &StoppingRule::iterations(max_k), &TraceOptions::on(reference.map(<[f64]>::to_vec)))?;
    Ok(trace)
}

/// Writes `trace` with columns `k, solver, dist_sq, feas_sq, dist_sq_avg,
/// feas_sq_avg, projections`. The distance columns are dropped, with a
/// warning, when the trace carries no distances.
pub fn write_trace_csv<W: Write>(out: W, solver: SolverId, trace: &ConvergenceTrace) -> Result<(), BenchError> {
    let with_dist = trace.records.first().is_some_and(|r| r.dist_sq.is_some());
    if !with_dist {
        log::warn!("no reference solution; distance columns omitted");
    }
    let mut w = csv::Writer::from_writer(out);
    if with_dist {
        w.write_record(["k", "solver", "dist_sq", "feas_sq", "dist_sq_avg", "feas_sq_avg", "projections"])?;
    } else {
        w.write_record(["k", "solver", "feas_sq", "feas_sq_avg", "projections"])?;
    }
    let name = solver.as_str();
    for r in &trace.records {
        let (k, p) = (r.k.to_string(), r.projections.to_string());
        let (feas, feas_avg) = (r.feas_sq.to_string(), r.feas_sq_avg.to_string());
        match (r.dist_sq, r.dist_sq_avg) {
            (Some(d), Some(da)) if with_dist => w.write_record([k.as_str(), name, &d.to_string(), &feas, &da.to_string(), &feas_avg, &p])?,
            _ => w.write_record([k.as_str(), name, &feas, &feas_avg, &p])?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Least-squares slope of `log y` against `log k` over records with
/// `lo ≤ k ≤ hi`, sampled at `points` log-spaced values of `k`.
pub fn loglog_slope(trace: &ConvergenceTrace, lo: usize, hi: usize, points: usize, y: impl Fn(&pipg::TraceRecord) -> f64) -> Option<f64> {
    let mut ks: Vec<usize> = (0..points)
        .map(|i| {
            let t = i as f64 / (points.max(2) - 1) as f64;
            ((lo as f64).ln() * (1.0 - t) + (hi as f64).ln() * t).exp().round() as usize
        })
        .collect();
    ks.dedup();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in ks {
        let rec = trace.records.iter().find(|r| r.k == k)?;
        let v = y(rec);
        if v > 0.0 && v.is_finite() {
            xs.push((k as f64).ln());
            ys.push(v.ln());
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    Some(sxy / sxx)
}
