//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

use std::sync::Arc;
use std::time::Instant;

use pipg::baselines::Admm;
use pipg::linalg::dot;
use pipg::mpc::structured_pipg_step;
use pipg::projections::{Affine, SquaredNorm, SumExp};
use pipg::solver::pipg_step;
use pipg::{
    build_benchmark, estimate_bounds, ConvexSet, Execution, Iteration, LyapunovForm, QpProblem, SolverState, SpectralBounds, StageState,
    StepSchedule, StoppingRule, TraceOptions,
};
use pipg_bench::reference::{compute_reference, ReferenceOptions, ReferenceSolution};
use pipg_bench::sweep::initial_point;
use pipg_bench::trace_run::loglog_slope;
use pipg_bench::{relative_distance, run_sweep, solvers, ExperimentConfig, InitDistribution, SolverId, SolverSettings};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

struct Benchmark {
    t: usize,
    qp: QpProblem,
    bounds: SpectralBounds,
    reference: ReferenceSolution,
}

fn benchmark(t: usize) -> Benchmark {
    let qp = build_benchmark(t).unwrap().lift().unwrap();
    let bounds = estimate_bounds(&qp, 1e-4).unwrap();
    let reference = compute_reference(&qp, &ReferenceOptions::default()).unwrap_or_else(|e| panic!("reference at T={t}: {e}"));
    Benchmark { t, qp, bounds, reference }
}

fn zeros(qp: &QpProblem) -> (Vec<f64>, Vec<f64>) {
    (vec![0.0; qp.dim()], vec![0.0; qp.num_constraints()])
}

// ---- 1: projection laws ----

fn random_leaf(rng: &mut ChaCha8Rng) -> ConvexSet {
    let n = rng.random_range(1..5usize);
    match rng.random_range(0..9) {
        0 => ConvexSet::ball(n, rng.random_range(0.1..3.0)).unwrap(),
        1 => {
            let (lower, upper) = (0..n)
                .map(|_| {
                    let lo = if rng.random_bool(0.2) { f64::NEG_INFINITY } else { rng.random_range(-2.0..0.0) };
                    let hi = if rng.random_bool(0.2) { f64::INFINITY } else { rng.random_range(0.0..2.0) };
                    (lo, hi)
                })
                .unzip();
            ConvexSet::boxed(lower, upper).unwrap()
        }
        2 => {
            let a = (0..n).map(|_| rng.random_range(0.2..3.0) * if rng.random_bool(0.5) { -1.0 } else { 1.0 }).collect();
            ConvexSet::halfspace(a, rng.random_range(-2.0..2.0)).unwrap()
        }
        3 => ConvexSet::soc(n + 1).unwrap(),
        4 => ConvexSet::sublevel(Arc::new(SquaredNorm { dim: n, scale: rng.random_range(0.2..2.0) }), rng.random_range(0.1..3.0)),
        5 => ConvexSet::sublevel(Arc::new(SumExp { dim: n }), n as f64 * rng.random_range(0.5..3.0)),
        6 => {
            let mut a: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            a[0] += 0.5f64.copysign(a[0]);
            ConvexSet::sublevel(Arc::new(Affine { a, b: rng.random_range(-1.0..1.0) }), 0.0)
        }
        7 => ConvexSet::epigraph(Arc::new(SquaredNorm { dim: n, scale: rng.random_range(0.2..2.0) })),
        _ => ConvexSet::epigraph(Arc::new(SumExp { dim: n.min(3) })),
    }
}

fn random_set(rng: &mut ChaCha8Rng) -> ConvexSet {
    if rng.random_bool(0.25) {
        let k = rng.random_range(1..4);
        ConvexSet::product((0..k).map(|_| random_leaf(rng)).collect())
    } else {
        random_leaf(rng)
    }
}

fn projection_laws() -> Outcome {
    const CASES: usize = 12_000;
    const TOL: f64 = 1e-10;
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = [0.0f64; 4];
    for _ in 0..CASES {
        let set = random_set(&mut rng);
        let n = set.dim();
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
        let (Ok(px), Ok(py)) = (set.project(&x), set.project(&y)) else {
            return outcome(false, format!("projection error on {set:?}"));
        };
        let membership = if set.contains(&px, TOL) { 0.0 } else { f64::INFINITY };
        let ppx = set.project(&px).unwrap();
        let idem = px.iter().zip(&ppx).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let dp = px.iter().zip(&py).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let dx = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let r: Vec<f64> = x.iter().zip(&px).map(|(a, b)| a - b).collect();
        let d: Vec<f64> = py.iter().zip(&px).map(|(a, b)| a - b).collect();
        for (w, v) in worst.iter_mut().zip([membership, idem, dp - dx, dot(&r, &d)]) {
            *w = w.max(v);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = worst.iter().all(|&v| v <= TOL) && secs < 10.0;
    outcome(
        pass,
        format!(
            "{CASES} cases in {secs:.2} s; worst idempotence {:.1e}, expansion {:.1e}, variational {:.1e}, membership {}",
            worst[1],
            worst[2],
            worst[3],
            if worst[0] == 0.0 { "ok" } else { "violated" }
        ),
    )
}

// ---- 2: ergodic bounds ----

fn ergodic_bounds(benches: &[&Benchmark]) -> Outcome {
    const K: usize = 10_000;
    const SLACK: f64 = 1e-9;
    let started = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let mut notes = Vec::new();
    for b in benches {
        let (z1, w1) = zeros(&b.qp);
        for (name, schedule) in [("constant", StepSchedule::constant_default(b.bounds)), ("varying", StepSchedule::varying(b.bounds).unwrap())] {
            let v1 = schedule.initial_lyapunov(LyapunovForm::Stated, &z1, &w1, &b.reference.z_star, &b.reference.w_star);
            let (_, trace) = pipg::solver::solve(
                &b.qp,
                schedule,
                (z1.clone(), w1.clone()),
                &StoppingRule::iterations(K),
                &TraceOptions::on(Some(b.reference.z_star.clone())),
            )
            .unwrap();
            let mut margin = f64::NEG_INFINITY;
            for r in &trace.records {
                let (feas, dist) = schedule.ergodic_bounds(r.k, v1);
                margin = margin.max(0.5 * r.feas_sq_avg - feas).max(0.5 * r.dist_h_sq_avg.unwrap() - dist);
            }
            worst = worst.max(margin);
            notes.push(format!("T={} {name} max(lhs − rhs) {margin:.2e}", b.t));
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(worst <= SLACK && secs < 60.0, format!("{} ({secs:.1} s)", notes.join("; ")))
}

// ---- 3: Lyapunov decrease ----

fn lyapunov_decrease(b: &Benchmark) -> Outcome {
    let schedule = StepSchedule::constant_default(b.bounds);
    let (alpha, beta) = (schedule.alpha(1), schedule.beta(1));
    let (zs, ws) = (&b.reference.z_star, &b.reference.w_star);
    let v = |z: &[f64], w: &[f64]| -> f64 {
        let dz: f64 = z.iter().zip(zs).map(|(a, b)| (a - b).powi(2)).sum();
        let dw: f64 = w.iter().zip(ws).map(|(a, b)| (a - b).powi(2)).sum();
        dz / (2.0 * alpha) + dw / (2.0 * beta)
    };
    let mut state = SolverState::zeros(&b.qp);
    let mut worst = f64::INFINITY;
    for _ in 0..1000 {
        let (z, w) = (state.z.clone(), state.w.clone());
        let feas: f64 = b.qp.constraint_residual(&z).iter().map(|r| r * r).sum();
        pipg_step(&b.qp, &schedule, &mut state).unwrap();
        let slack = v(&z, &w) - v(&state.z, &state.w) - 0.5 * beta * feas - 0.5 * b.qp.h_dist_sq(&state.z, zs);
        worst = worst.min(slack);
    }
    outcome(worst >= -1e-8, format!("min slack {worst:.2e} over k ≤ 1000"))
}

// ---- 4: rate order ----

fn rate_order(b: &Benchmark) -> Outcome {
    let mut slopes = Vec::new();
    for schedule in [StepSchedule::constant_default(b.bounds), StepSchedule::varying(b.bounds).unwrap()] {
        let (_, trace) = pipg::solver::solve(&b.qp, schedule, zeros(&b.qp), &StoppingRule::iterations(10_000), &TraceOptions::on(None)).unwrap();
        slopes.push(loglog_slope(&trace, 100, 10_000, 60, |r| r.feas_sq_avg).unwrap_or(f64::NAN));
    }
    outcome(slopes[0] <= -1.0 && slopes[1] <= -2.5, format!("slope constant {:.2}, varying {:.2}", slopes[0], slopes[1]))
}

// ---- 5: cross-solver agreement ----

fn cross_solver(b: &Benchmark) -> Outcome {
    const BUDGET: u64 = 1_000_000;
    let mut pass = true;
    let mut notes = Vec::new();
    for id in SolverId::ALL {
        let mut s = solvers::build(id, &b.qp, &b.bounds, zeros(&b.qp), &SolverSettings::default()).unwrap();
        let mut reached = None;
        let mut dist = f64::INFINITY;
        while s.projections() < BUDGET {
            s.step().unwrap();
            if s.iterations() % 100 == 0 || s.projections() >= BUDGET {
                dist = relative_distance(s.primal(), &b.reference.z_star);
                if dist <= 1e-4 {
                    reached = Some(s.projections());
                    break;
                }
            }
        }
        pass &= reached.is_some();
        notes.push(match reached {
            Some(p) => format!("{id} {p}"),
            None => format!("{id} not reached (rel {dist:.1e})"),
        });
    }
    outcome(pass, format!("projections to rel. distance 1e-4: {}", notes.join(", ")))
}

// ---- 6: structured equivalence ----

fn structured_equivalence() -> Outcome {
    let tp = build_benchmark(5).unwrap();
    let qp = tp.lift().unwrap();
    let bounds = estimate_bounds(&qp, 1e-4).unwrap();
    let (z0, w0) = initial_point(InitDistribution::StandardNormal, 99, 0, qp.dim(), qp.num_constraints());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let (mut lifted_dev, mut parallel_dev) = (0.0f64, 0.0f64);
    for schedule in [StepSchedule::constant_default(bounds), StepSchedule::varying(bounds).unwrap()] {
        let mut lifted = SolverState::new(&qp, z0.clone(), w0.clone()).unwrap();
        let mut serial = StageState::from_lifted(&tp, &z0, &w0).unwrap();
        let mut parallel = serial.clone();
        for _ in 0..100 {
            pipg_step(&qp, &schedule, &mut lifted).unwrap();
            structured_pipg_step(&tp, &schedule, &mut serial, Execution::Serial).unwrap();
            structured_pipg_step(&tp, &schedule, &mut parallel, Execution::Parallel(&pool)).unwrap();
        }
        let max_dev = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        lifted_dev = lifted_dev.max(max_dev(&serial.lifted_z(), &lifted.z)).max(max_dev(&serial.lifted_w(), &lifted.w));
        parallel_dev = parallel_dev.max(max_dev(&serial.lifted_z(), &parallel.lifted_z())).max(max_dev(&serial.lifted_w(), &parallel.lifted_w()));
    }
    outcome(lifted_dev <= 1e-10 && parallel_dev <= 1e-12, format!("structured vs lifted {lifted_dev:.1e}, serial vs parallel {parallel_dev:.1e}"))
}

// ---- 7: ordinal reproduction ----

fn ordinal() -> Outcome {
    let started = Instant::now();
    let base = ExperimentConfig { horizons: vec![25], num_seeds: 20, ..Default::default() };
    // cp-const is only compared at the loose tolerance
    let loose = ExperimentConfig { tolerances: vec![1e-3], solvers: Some(vec![SolverId::PipgVar, SolverId::PipgConst, SolverId::CpConst]), ..base.clone() };
    let tight = ExperimentConfig { tolerances: vec![1e-5], solvers: Some(vec![SolverId::PipgVar, SolverId::PipgConst]), ..base };
    let pool = pipg_bench::thread_pool().unwrap();
    let a = run_sweep(&loose, &pool).unwrap();
    let b = run_sweep(&tight, &pool).unwrap();
    let mean = |r: &pipg_bench::SweepReport, s, e| {
        let row = r.row(25, s, e).unwrap();
        (row.mean_projections, row.failures)
    };
    let (var3, f1) = mean(&a, SolverId::PipgVar, 1e-3);
    let (const3, f2) = mean(&a, SolverId::PipgConst, 1e-3);
    let (cp3, f3) = mean(&a, SolverId::CpConst, 1e-3);
    let (var5, f4) = mean(&b, SolverId::PipgVar, 1e-5);
    let (const5, f5) = mean(&b, SolverId::PipgConst, 1e-5);
    let failures = f1 + f2 + f3 + f4 + f5;
    let ratio = const3.max(cp3) / const3.min(cp3);
    let pass = failures == 0 && var3 < const3 && var5 < const5 && ratio <= 2.0;
    outcome(
        pass,
        format!(
            "T=25, 20 seeds: ε=1e-3 var {var3:.0} const {const3:.0} cp-const {cp3:.0} (ratio {ratio:.2}); ε=1e-5 var {var5:.0} const {const5:.0}; failures {failures} ({:.0} s)",
            started.elapsed().as_secs_f64()
        ),
    )
}

// ---- 8: determinism ----

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for i in 0..2 {
        let path = dir.path().join(format!("sweep{i}.csv"));
        let cfg = ExperimentConfig {
            horizons: vec![5, 10],
            tolerances: vec![1e-3, 1e-4],
            num_seeds: 4,
            seed_base: 17,
            output: path.clone(),
            ..Default::default()
        };
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        run_sweep(&cfg, &pool).unwrap().save(&path).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    outcome(bytes[0] == bytes[1] && !bytes[0].is_empty(), format!("{} bytes, identical: {}", bytes[0].len(), bytes[0] == bytes[1]))
}

// ---- 9: ADMM internals ----

fn admm_internals(b: &Benchmark) -> Outcome {
    let mut admm = Admm::new(&b.qp, SolverSettings::default().admm_alpha, zeros(&b.qp)).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..5000 {
        admm.step().unwrap();
        worst = worst.max(admm.last_solve_residual());
    }
    // same α again must reuse the factor
    admm.set_alpha(admm.alpha()).unwrap();
    admm.step().unwrap();
    worst = worst.max(admm.last_solve_residual());
    let factorizations = admm.factorizations();
    outcome(worst <= 1e-10 && factorizations == 1, format!("max linear-system residual {worst:.1e} over {} iterations, {factorizations} factorization(s)", admm.iterations()))
}

fn main() {
    let started = Instant::now();
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n}: {} {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };

    report(1, projection_laws());
    let t5 = benchmark(5);
    let t25 = benchmark(25);
    report(2, ergodic_bounds(&[&t5, &t25]));
    report(3, lyapunov_decrease(&t5));
    report(4, rate_order(&t25));
    report(5, cross_solver(&t5));
    report(6, structured_equivalence());
    report(7, ordinal());
    report(8, determinism());
    report(9, admm_internals(&t25));

    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    println!("acceptance: {}/{} passed in {:.1} s", results.len() - failed.len(), results.len(), started.elapsed().as_secs_f64());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
