use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pipg::{build_benchmark, estimate_bounds};
use pipg_bench::reference::{compute_reference, ReferenceOptions, ReferenceSolution};
use pipg_bench::{run_sweep, run_trace, thread_pool, write_trace_csv, BenchError, ExperimentConfig, SolverId, SolverSettings};

#[derive(Parser)]
#[command(name = "bench", about = "Traces, sweeps and reference solutions on the MPC tracking benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-iteration trace of one solver from a zero start, as CSV.
    Trace {
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long)]
        solver: SolverId,
        #[arg(long = "max-iter")]
        max_iter: usize,
        /// Reference solution JSON from `bench reference`.
        #[arg(long = "ref")]
        reference: Option<PathBuf>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Projections-to-tolerance sweep described by a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Certified reference solution as JSON.
    Reference {
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lifted benchmark QP as JSON.
    Build {
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let BenchError::Certification { candidates, .. } = &e {
                for c in candidates.iter() {
                    eprintln!("  {}: {} iterations, converged {}, residuals {:?}", c.solver, c.iterations, c.converged, c.residuals);
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn benchmark_qp(horizon: usize) -> Result<pipg::QpProblem, BenchError> {
    if horizon == 0 {
        return Err(BenchError::Config("T must be positive".into()));
    }
    Ok(build_benchmark(horizon)?.lift()?)
}

fn execute(command: Command) -> Result<(), BenchError> {
    match command {
        Command::Trace { horizon, solver, max_iter, reference, out } => {
            let qp = benchmark_qp(horizon)?;
            let reference = match reference {
                Some(path) => Some(ReferenceSolution::from_json(&std::fs::read_to_string(&path)?)?),
                None => None,
            };
            let bounds = estimate_bounds(&qp, 1e-4)?;
            let init = (vec![0.0; qp.dim()], vec![0.0; qp.num_constraints()]);
            let trace = run_trace(&qp, solver, &bounds, &SolverSettings::default(), init, max_iter, reference.as_ref().map(|r| r.z_star.as_slice()))?;
            match out {
                Some(path) => write_trace_csv(std::fs::File::create(path)?, solver, &trace)?,
                None => write_trace_csv(std::io::stdout().lock(), solver, &trace)?,
            }
        }
        Command::Sweep { config } => {
            let cfg = ExperimentConfig::from_path(&config)?;
            let pool = thread_pool()?;
            let report = run_sweep(&cfg, &pool)?;
            let meta = report.save(&cfg.output)?;
            log::info!("wrote {} and {}", cfg.output.display(), meta.display());
        }
        Command::Reference { horizon, out } => {
            let qp = benchmark_qp(horizon)?;
            let r = compute_reference(&qp, &ReferenceOptions::default())?;
            log::info!("certified (agreement {:.2e}, max residual {:.2e})", r.agreement, r.certified_residuals.max());
            std::fs::write(out, r.to_json()?)?;
        }
        Command::Build { horizon, out } => {
            let qp = benchmark_qp(horizon)?;
            let mut f = std::fs::File::create(out)?;
            f.write_all(qp.to_json()?.as_bytes())?;
        }
    }
    Ok(())
}
