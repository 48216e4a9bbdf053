use pipg::linalg::norm_inf;
use pipg::mpc::{build_benchmark_with, BenchmarkOptions};
use pipg::{build_benchmark, estimate_bounds, pipg_step, Execution, SolverState, StageState, StepSchedule, TrackingProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn random_inputs_give_feasible_lifted_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for t in [1, 5, 25] {
        let tp = build_benchmark(t).unwrap();
        let qp = tp.lift().unwrap();
        for _ in 0..20 {
            let u: Vec<Vec<f64>> = (0..t).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            let z = tp.pack(&tp.simulate(&u));
            assert!(norm_inf(&qp.constraint_residual(&z)) <= 1e-12);
        }
    }
}

#[test]
fn structured_iterates_track_lifted_from_random_start() {
    let tp = build_benchmark(5).unwrap();
    let qp = tp.lift().unwrap();
    let bounds = estimate_bounds(&qp, 1e-4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let z: Vec<f64> = (0..qp.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
    let w: Vec<f64> = (0..qp.num_constraints()).map(|_| rng.random_range(-2.0..2.0)).collect();
    for schedule in [StepSchedule::constant_default(bounds), StepSchedule::varying(bounds).unwrap()] {
        let mut lifted = SolverState::new(&qp, z.clone(), w.clone()).unwrap();
        let mut staged = StageState::from_lifted(&tp, &z, &w).unwrap();
        for _ in 0..100 {
            pipg_step(&qp, &schedule, &mut lifted).unwrap();
            pipg::mpc::structured_pipg_step(&tp, &schedule, &mut staged, Execution::Serial).unwrap();
        }
        assert!(max_gap(&lifted.z, &staged.lifted_z()) <= 1e-10);
        assert!(max_gap(&lifted.w, &staged.lifted_w()) <= 1e-10);
        assert!(max_gap(&lifted.z_hat, &staged.lifted_hat()) <= 1e-10);
    }
}

#[test]
fn single_stage_state_update_ignores_future_multiplier() {
    // with T = 1 the x₁ step is x₁ − α(Q₁(x₁ − y₁) + v₁)
    let tp = build_benchmark(1).unwrap();
    let qp = tp.lift().unwrap();
    let bounds = estimate_bounds(&qp, 1e-4).unwrap();
    let schedule = StepSchedule::constant_default(bounds);
    let z = vec![0.05, -0.02, -2.3, 0.7, 0.1, 0.0];
    let w = vec![0.3, -0.1, 0.2, 0.05];
    let mut staged = StageState::from_lifted(&tp, &z, &w).unwrap();
    pipg::mpc::structured_pipg_step(&tp, &schedule, &mut staged, Execution::Serial).unwrap();

    let (alpha, beta) = (schedule.alpha(1), schedule.beta(1));
    let defect: Vec<f64> = {
        let ax = tp.a[0].mul_vec(&tp.x0);
        let bu = tp.b[0].mul_vec(&z[..2]);
        (0..4).map(|i| z[2 + i] - ax[i] - bu[i]).collect()
    };
    let v: Vec<f64> = (0..4).map(|i| w[i] + beta * defect[i]).collect();
    let q = &tp.q[0];
    let diff: Vec<f64> = (0..4).map(|i| z[2 + i] - tp.y[0][i]).collect();
    let qd = q.mul_vec(&diff);
    let mut x: Vec<f64> = (0..4).map(|i| z[2 + i] - alpha * (qd[i] + v[i])).collect();
    tp.x_sets[0].project_in_place(&mut x).unwrap();
    assert!(max_gap(&x, &staged.stages[0].x) <= 1e-15);
}

#[test]
fn parallel_pool_matches_serial_over_long_run() {
    let tp = build_benchmark(25).unwrap();
    let qp = tp.lift().unwrap();
    let schedule = StepSchedule::varying(estimate_bounds(&qp, 1e-4).unwrap()).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let mut serial = StageState::zeros(&tp);
    let mut parallel = StageState::zeros(&tp);
    for _ in 0..300 {
        pipg::mpc::structured_pipg_step(&tp, &schedule, &mut serial, Execution::Serial).unwrap();
        pipg::mpc::structured_pipg_step(&tp, &schedule, &mut parallel, Execution::Parallel(&pool)).unwrap();
    }
    assert_eq!(serial.lifted_z(), parallel.lifted_z());
    assert_eq!(serial.lifted_w(), parallel.lifted_w());
}

#[test]
fn tracking_problem_json_roundtrip_preserves_lifting() {
    let tp = build_benchmark_with(4, &BenchmarkOptions { reference_velocity: [0.5, -0.1], ..Default::default() }).unwrap();
    let back: TrackingProblem = serde_json::from_str(&serde_json::to_string(&tp).unwrap()).unwrap();
    let (a, b) = (tp.lift().unwrap(), back.lift().unwrap());
    assert_eq!(a.linear(), b.linear());
    assert_eq!(a.rhs(), b.rhs());
    assert_eq!(a.constraints().to_dense(), b.constraints().to_dense());
}
