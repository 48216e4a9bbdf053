use nalgebra::{DMatrix, SymmetricEigen};
use pipg::linalg::{dot, norm2};
use pipg::{build_benchmark, estimate_bounds, ConvexSet, DenseMatrix, QpProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gram(g: &DenseMatrix) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(g.rows(), g.cols(), g.as_slice());
    a.transpose() * a
}

#[test]
fn sigma_matches_dense_eigensolver_on_benchmark() {
    let qp = build_benchmark(25).unwrap().lift().unwrap();
    let tol = 1e-4;
    let bounds = estimate_bounds(&qp, tol).unwrap();
    let eig = SymmetricEigen::new(gram(&qp.constraints().to_dense()));
    let exact = eig.eigenvalues.max();
    assert!(bounds.sigma >= exact, "σ = {} below λ_max(GᵀG) = {exact}", bounds.sigma);
    assert!((bounds.sigma - exact) / exact <= 1e-3, "σ = {} vs {exact}", bounds.sigma);
    assert_eq!((bounds.mu, bounds.lambda), (0.5, 1.0));
}

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let b: Vec<f64> = (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = DMatrix::from_row_slice(n, n, &b);
    let h = &b * b.transpose() + DMatrix::identity(n, n) * 0.3;
    DenseMatrix::from_row_major(n, n, h.transpose().as_slice().to_vec()).unwrap()
}

#[test]
fn rayleigh_quotients_stay_inside_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 12;
    let h = random_spd(n, &mut rng);
    let g_data: Vec<f64> = (0..5 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let g = DenseMatrix::from_row_major(5, n, g_data).unwrap();
    let qp = QpProblem::new(&h, vec![0.0; n], &g, vec![0.0; 5], ConvexSet::whole(n)).unwrap();
    let b = estimate_bounds(&qp, 1e-6).unwrap();

    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, h.as_slice()));
    assert!(b.mu <= eig.eigenvalues.min() && b.mu >= 0.99 * eig.eigenvalues.min(), "μ = {} vs {:?}", b.mu, eig.eigenvalues);
    assert!(b.lambda >= eig.eigenvalues.max());

    for _ in 0..1000 {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let nv = norm2(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let q = dot(&v, &h.mul_vec(&v));
        assert!(q >= b.mu - 1e-9 && q <= b.lambda + 1e-9, "vᵀHv = {q}");
        let gv = g.mul_vec(&v);
        assert!(dot(&gv, &gv) <= b.sigma + 1e-9);
    }
}

#[test]
fn inflated_bounds_still_converge() {
    use pipg::{solver, StepSchedule, StoppingRule, TraceOptions};
    let qp = build_benchmark(5).unwrap().lift().unwrap();
    let b = estimate_bounds(&qp, 1e-4).unwrap();
    let n = qp.dim();
    let m = qp.num_constraints();
    let stop = StoppingRule::feasibility(1e-4, 200_000);
    let (tight, _) = solver::solve(&qp, StepSchedule::varying(b).unwrap(), (vec![0.0; n], vec![0.0; m]), &stop, &TraceOptions::off()).unwrap();
    let (loose, _) = solver::solve(&qp, StepSchedule::varying(b.inflated(2.0)).unwrap(), (vec![0.0; n], vec![0.0; m]), &stop, &TraceOptions::off()).unwrap();
    assert!(tight.reason.converged() && loose.reason.converged());
    assert!(loose.iterations >= tight.iterations);
}
