//! Finite-horizon tracking problems, their lifting to [`QpProblem`], and a
//! per-stage PIPG iteration that never forms the lifted matrices.
//!
//! The tracking problem is
//!
//! ```text
//!     minimize   ½ Σₜ ‖xₜ − yₜ‖²_{Qₜ} + ½ Σₜ ‖uₜ₋₁‖²_{Rₜ₋₁}
//!     subject to xₜ = Aₜ₋₁ xₜ₋₁ + Bₜ₋₁ uₜ₋₁,  uₜ₋₁ ∈ Uₜ₋₁,  xₜ ∈ Xₜ,   t = 1..T
//! ```
//!
//! lifted with `z = [u₀; x₁; u₁; x₂; …; u_{T−1}; x_T]`.

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite, CsrMatrix, DenseMatrix};
use crate::solver::StepSchedule;
use crate::problem::QpProblem;
use crate::projections::ConvexSet;

/// Rotation rate of the keep-out halfspace in the benchmark scenario.
pub const BENCHMARK_ROTATION_RATE: f64 = 0.063;
pub const BENCHMARK_START: [f64; 2] = [-2.5, 0.6];
pub const BENCHMARK_TARGET: [f64; 2] = [2.9, 0.3];

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingProblem {
    /// `A₀ … A_{T−1}`
    #[serde(rename = "A")]
    pub a: Vec<DenseMatrix>,
    /// `B₀ … B_{T−1}`
    #[serde(rename = "B")]
    pub b: Vec<DenseMatrix>,
    /// `Q₁ … Q_T`
    #[serde(rename = "Q")]
    pub q: Vec<DenseMatrix>,
    /// `R₀ … R_{T−1}`
    #[serde(rename = "R")]
    pub r: Vec<DenseMatrix>,
    /// `y₁ … y_T`
    pub y: Vec<Vec<f64>>,
    /// `X₁ … X_T`
    #[serde(rename = "X")]
    pub x_sets: Vec<ConvexSet>,
    /// `U₀ … U_{T−1}`
    #[serde(rename = "U")]
    pub u_sets: Vec<ConvexSet>,
    pub x0: Vec<f64>,
}

/// State and input trajectories `x₁..x_T`, `u₀..u_{T−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub u: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
}

impl TrackingProblem {
    pub fn horizon(&self) -> usize {
        self.a.len()
    }

    pub fn state_dim(&self) -> usize {
        self.x0.len()
    }

    pub fn input_dim(&self) -> usize {
        self.b.first().map_or(0, DenseMatrix::cols)
    }

    fn stage_width(&self) -> usize {
        self.state_dim() + self.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.horizon();
        let (nx, nu) = (self.state_dim(), self.input_dim());
        if t == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        let lens = [
            ("B list", self.b.len()),
            ("Q list", self.q.len()),
            ("R list", self.r.len()),
            ("y list", self.y.len()),
            ("X list", self.x_sets.len()),
            ("U list", self.u_sets.len()),
        ];
        for (what, len) in lens {
            if len != t {
                return Err(Error::DimensionMismatch { what, expected: t, found: len });
            }
        }
        let shape = |what, m: &DenseMatrix, rows: usize, cols: usize| {
            if m.rows() != rows {
                Err(Error::DimensionMismatch { what, expected: rows, found: m.rows() })
            } else if m.cols() != cols {
                Err(Error::DimensionMismatch { what, expected: cols, found: m.cols() })
            } else {
                Ok(())
            }
        };
        for s in 0..t {
            shape("A", &self.a[s], nx, nx)?;
            shape("B", &self.b[s], nx, nu)?;
            shape("Q", &self.q[s], nx, nx)?;
            shape("R", &self.r[s], nu, nu)?;
            if !self.q[s].is_symmetric(1e-12) || !self.r[s].is_symmetric(1e-12) {
                return Err(Error::Config(format!("stage {} weights are not symmetric", s + 1)));
            }
            if self.y[s].len() != nx {
                return Err(Error::DimensionMismatch { what: "y", expected: nx, found: self.y[s].len() });
            }
            if self.x_sets[s].dim() != nx {
                return Err(Error::DimensionMismatch { what: "X set", expected: nx, found: self.x_sets[s].dim() });
            }
            if self.u_sets[s].dim() != nu {
                return Err(Error::DimensionMismatch { what: "U set", expected: nu, found: self.u_sets[s].dim() });
            }
        }
        Ok(())
    }

    /// Rewrites the tracking problem as a single QP.
    pub fn lift(&self) -> Result<QpProblem> {
        self.validate()?;
        let t = self.horizon();
        let (nx, nu, width) = (self.state_dim(), self.input_dim(), self.stage_width());
        let n = t * width;
        let m = t * nx;

        let mut h_trip = Vec::new();
        let mut g_trip = Vec::new();
        let mut lin = vec![0.0; n];
        let mut rhs = vec![0.0; m];
        let mut factors = Vec::with_capacity(2 * t);
        for s in 0..t {
            let (uo, xo, row) = (s * width, s * width + nu, s * nx);
            for i in 0..nu {
                for j in 0..nu {
                    h_trip.push((uo + i, uo + j, self.r[s][(i, j)]));
                }
            }
            let qy = self.q[s].mul_vec(&self.y[s]);
            for i in 0..nx {
                for j in 0..nx {
                    h_trip.push((xo + i, xo + j, self.q[s][(i, j)]));
                }
                lin[xo + i] = -qy[i];
                g_trip.push((row + i, xo + i, 1.0));
                for j in 0..nu {
                    g_trip.push((row + i, uo + j, -self.b[s][(i, j)]));
                }
                if s > 0 {
                    let prev_x = (s - 1) * width + nu;
                    for j in 0..nx {
                        g_trip.push((row + i, prev_x + j, -self.a[s][(i, j)]));
                    }
                }
            }
            factors.push(self.u_sets[s].clone());
            factors.push(self.x_sets[s].clone());
        }
        rhs[..nx].copy_from_slice(&self.a[0].mul_vec(&self.x0));
        QpProblem::from_sparse(
            CsrMatrix::from_triplets(n, n, &h_trip)?,
            lin,
            CsrMatrix::from_triplets(m, n, &g_trip)?,
            rhs,
            ConvexSet::product(factors),
        )
    }

    /// Lifted vector `[u₀; x₁; …; u_{T−1}; x_T]`.
    pub fn pack(&self, traj: &Trajectory) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.horizon() * self.stage_width());
        for (u, x) in traj.u.iter().zip(&traj.x) {
            z.extend_from_slice(u);
            z.extend_from_slice(x);
        }
        z
    }

    pub fn unpack(&self, z: &[f64]) -> Trajectory {
        let (nu, width) = (self.input_dim(), self.stage_width());
        let (u, x) = z.chunks(width).map(|c| (c[..nu].to_vec(), c[nu..].to_vec())).unzip();
        Trajectory { u, x }
    }

    /// Propagates the dynamics from `x0` under inputs `u`.
    pub fn simulate(&self, u: &[Vec<f64>]) -> Trajectory {
        let mut x = Vec::with_capacity(u.len());
        let mut prev = self.x0.clone();
        for (s, us) in u.iter().enumerate() {
            let mut next = self.a[s].mul_vec(&prev);
            for (n, bu) in next.iter_mut().zip(self.b[s].mul_vec(us)) {
                *n += bu;
            }
            x.push(next.clone());
            prev = next;
        }
        Trajectory { u: u.to_vec(), x }
    }
}

/// Knobs of the trajectory-planning scenario that are not pinned down by the
/// dynamics and constraints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOptions {
    pub rotation_rate: f64,
    pub start: [f64; 2],
    pub target: [f64; 2],
    /// Reference velocity; the reference positions are evenly spaced either way.
    pub reference_velocity: [f64; 2],
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            rotation_rate: BENCHMARK_ROTATION_RATE,
            start: BENCHMARK_START,
            target: BENCHMARK_TARGET,
            reference_velocity: [0.0, 0.0],
        }
    }
}

/// Double integrator (0.5 s sampling) tracking a straight line past a
/// circular keep-out zone convexified by a rotating halfspace.
pub fn build_benchmark(horizon: usize) -> Result<TrackingProblem> {
    build_benchmark_with(horizon, &BenchmarkOptions::default())
}

pub fn build_benchmark_with(horizon: usize, opts: &BenchmarkOptions) -> Result<TrackingProblem> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let a = DenseMatrix::from_rows(&[
        vec![1.0, 0.0, 0.5, 0.0],
        vec![0.0, 1.0, 0.0, 0.5],
        vec![0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 0.0, 1.0],
    ])?;
    let b = DenseMatrix::from_rows(&[vec![0.125, 0.0], vec![0.0, 0.125], vec![0.5, 0.0], vec![0.0, 0.5]])?;
    let q = DenseMatrix::from_diagonal(&[1.0, 0.5, 1.0, 0.5]);
    let r = DenseMatrix::from_diagonal(&[1.0, 0.5]);

    let mut y = Vec::with_capacity(horizon);
    let mut x_sets = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let s = t as f64 / horizon as f64;
        let p1 = (1.0 - s) * opts.start[0] + s * opts.target[0];
        let p2 = (1.0 - s) * opts.start[1] + s * opts.target[1];
        y.push(vec![p1, p2, opts.reference_velocity[0], opts.reference_velocity[1]]);
        // [−cos θt, sin θt]ᵀ p ≥ 2  ⇔  ⟨(cos θt, −sin θt), p⟩ ≤ −2
        let angle = opts.rotation_rate * t as f64;
        x_sets.push(ConvexSet::product(vec![
            ConvexSet::halfspace(vec![angle.cos(), -angle.sin()], -2.0)?,
            ConvexSet::ball(2, 0.25)?,
        ]));
    }
    Ok(TrackingProblem {
        a: vec![a; horizon],
        b: vec![b; horizon],
        q: vec![q; horizon],
        r: vec![r; horizon],
        y,
        x_sets,
        u_sets: vec![ConvexSet::ball(2, 0.1)?; horizon],
        x0: vec![opts.start[0], opts.start[1], 0.0, 0.0],
    })
}

/// Per-stage iterate: `uₜ₋₁`, `xₜ`, `wₜ`, and the stage blocks of both averages.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub v: Vec<f64>,
    pub u_hat: Vec<f64>,
    pub x_hat: Vec<f64>,
    pub u_tilde: Vec<f64>,
    pub x_tilde: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageState {
    pub stages: Vec<Stage>,
    /// Index of the next iteration; starts at 1.
    pub k: usize,
    /// Lifted projections, one per iteration.
    pub projections: u64,
}

impl StageState {
    /// Splits lifted `(z, w)` into stages.
    pub fn from_lifted(tp: &TrackingProblem, z: &[f64], w: &[f64]) -> Result<Self> {
        let (t, nx) = (tp.horizon(), tp.state_dim());
        let n = t * tp.stage_width();
        if z.len() != n {
            return Err(Error::DimensionMismatch { what: "initial z", expected: n, found: z.len() });
        }
        if w.len() != t * nx {
            return Err(Error::DimensionMismatch { what: "initial w", expected: t * nx, found: w.len() });
        }
        let traj = tp.unpack(z);
        let stages = traj
            .u
            .into_iter()
            .zip(traj.x)
            .zip(w.chunks(nx))
            .map(|((u, x), ws)| Stage {
                u_hat: u.clone(),
                x_hat: x.clone(),
                u_tilde: u.clone(),
                x_tilde: x.clone(),
                v: ws.to_vec(),
                w: ws.to_vec(),
                u,
                x,
            })
            .collect();
        Ok(Self { stages, k: 1, projections: 0 })
    }

    pub fn zeros(tp: &TrackingProblem) -> Self {
        let n = tp.horizon() * tp.stage_width();
        Self::from_lifted(tp, &vec![0.0; n], &vec![0.0; tp.horizon() * tp.state_dim()]).expect("dimensions match")
    }

    pub fn lifted_z(&self) -> Vec<f64> {
        self.stages.iter().flat_map(|s| s.u.iter().chain(&s.x).copied()).collect()
    }

    pub fn lifted_w(&self) -> Vec<f64> {
        self.stages.iter().flat_map(|s| s.w.iter().copied()).collect()
    }

    pub fn lifted_hat(&self) -> Vec<f64> {
        self.stages.iter().flat_map(|s| s.u_hat.iter().chain(&s.x_hat).copied()).collect()
    }

    pub fn lifted_tilde(&self) -> Vec<f64> {
        self.stages.iter().flat_map(|s| s.u_tilde.iter().chain(&s.x_tilde).copied()).collect()
    }
}

/// How the stages of one phase are executed.
#[derive(Clone, Copy)]
pub enum Execution<'p> {
    Serial,
    Parallel(&'p ThreadPool),
}

fn map_stages<T, F>(exec: Execution<'_>, t: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Serial => (0..t).map(f).collect(),
        Execution::Parallel(pool) => pool.install(|| (0..t).into_par_iter().map(f).collect()),
    }
}

/// `xₜ − Aₜ₋₁xₜ₋₁ − Bₜ₋₁uₜ₋₁` with `x₀` fixed.
fn dynamics_defect(tp: &TrackingProblem, s: usize, stages: &[Stage]) -> Vec<f64> {
    let cur = &stages[s];
    let prev_x = if s == 0 { &tp.x0 } else { &stages[s - 1].x };
    let ax = tp.a[s].mul_vec(prev_x);
    let bu = tp.b[s].mul_vec(&cur.u);
    cur.x.iter().zip(ax).zip(bu).map(|((x, a), b)| x - a - b).collect()
}

/// One PIPG iteration executed stage by stage in three barrier-separated
/// phases: all `vₜ` from the current snapshot, then all `(uₜ₋₁, xₜ)`
/// projections from that snapshot, then all `wₜ` from the new primal iterate.
/// Stage updates within a phase are independent, so serial and parallel
/// execution give identical results.
pub fn structured_pipg_step(tp: &TrackingProblem, schedule: &StepSchedule, state: &mut StageState, exec: Execution<'_>) -> Result<()> {
    let t = tp.horizon();
    if state.stages.len() != t {
        return Err(Error::DimensionMismatch { what: "stage count", expected: t, found: state.stages.len() });
    }
    let k = state.k;
    let alpha = schedule.alpha(k);
    let beta = schedule.beta(k);

    let stages = &state.stages;
    let v: Vec<Vec<f64>> = map_stages(exec, t, |s| {
        let defect = dynamics_defect(tp, s, stages);
        stages[s].w.iter().zip(defect).map(|(w, d)| w + beta * d).collect()
    });

    let primal: Vec<Result<(Vec<f64>, Vec<f64>)>> = map_stages(exec, t, |s| {
        let st = &stages[s];
        let ru = tp.r[s].mul_vec(&st.u);
        let btv = tp.b[s].tmul_vec(&v[s]);
        let mut u: Vec<f64> = st.u.iter().zip(ru).zip(btv).map(|((u, r), b)| u - alpha * (r - b)).collect();
        tp.u_sets[s].project_in_place(&mut u)?;

        let diff: Vec<f64> = st.x.iter().zip(&tp.y[s]).map(|(x, y)| x - y).collect();
        let qd = tp.q[s].mul_vec(&diff);
        // Aₜᵀ vₜ₊₁, zero past the horizon
        let atv = if s + 1 < t { tp.a[s + 1].tmul_vec(&v[s + 1]) } else { vec![0.0; st.x.len()] };
        let mut x: Vec<f64> = (0..st.x.len()).map(|i| st.x[i] - alpha * (qd[i] + v[s][i] - atv[i])).collect();
        tp.x_sets[s].project_in_place(&mut x)?;
        Ok((u, x))
    });

    let mut next: Vec<Stage> = Vec::with_capacity(t);
    for (s, res) in primal.into_iter().enumerate() {
        let (u, x) = res?;
        let old = &stages[s];
        next.push(Stage { u, x, v: v[s].clone(), ..old.clone() });
    }

    let (wh, total_h) = schedule.hat_weights(k);
    let (wt, total_t) = schedule.tilde_weights(k);
    let (ch, ct) = (wh / total_h, wt / total_t);
    let updated: Vec<Stage> = map_stages(exec, t, |s| {
        let defect = dynamics_defect(tp, s, &next);
        let old = &stages[s];
        let mut st = next[s].clone();
        for (w, d) in st.w.iter_mut().zip(defect) {
            *w += beta * d;
        }
        mean_update(&mut st.u_hat, &old.u, ch);
        mean_update(&mut st.x_hat, &old.x, ch);
        mean_update(&mut st.u_tilde, &next[s].u, ct);
        mean_update(&mut st.x_tilde, &next[s].x, ct);
        st
    });

    if updated.iter().any(|s| !all_finite(&s.u) || !all_finite(&s.x) || !all_finite(&s.w)) {
        return Err(Error::NonFinite { iteration: k });
    }
    state.stages = updated;
    state.k += 1;
    state.projections += 1;
    Ok(())
}

fn mean_update(avg: &mut [f64], z: &[f64], c: f64) {
    for (a, v) in avg.iter_mut().zip(z) {
        *a += c * (v - *a);
    }
}
