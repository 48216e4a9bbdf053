//! The equality-constrained QP
//!
//! ```text
//!     minimize   ½ zᵀHz + hᵀz
//!     subject to Gz = g,  z ∈ Z
//! ```
//!
//! and its KKT diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, CsrMatrix, DenseMatrix};
use crate::projections::ConvexSet;

/// Asymmetry (relative to the largest entry) above which `QpProblem::new` logs a warning.
pub const SYMMETRY_WARN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct QpProblem {
    hessian: CsrMatrix,
    linear: Vec<f64>,
    constraints: CsrMatrix,
    rhs: Vec<f64>,
    set: ConvexSet,
}

impl QpProblem {
    /// Builds a problem from dense data. `H` is replaced by `(H + Hᵀ)/2`.
    pub fn new(h_mat: &DenseMatrix, h: Vec<f64>, g_mat: &DenseMatrix, g: Vec<f64>, set: ConvexSet) -> Result<Self> {
        if h_mat.rows() != h_mat.cols() {
            return Err(Error::DimensionMismatch { what: "H columns", expected: h_mat.rows(), found: h_mat.cols() });
        }
        let n = h_mat.rows();
        if !h_mat.is_symmetric(SYMMETRY_WARN_TOLERANCE) {
            log::warn!("H is not symmetric to {SYMMETRY_WARN_TOLERANCE:e}; using (H + Hᵀ)/2");
        }
        let mut sym = h_mat.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (h_mat[(i, j)] + h_mat[(j, i)]);
                sym[(i, j)] = avg;
                sym[(j, i)] = avg;
            }
        }
        Self::from_sparse(CsrMatrix::from_dense(&sym), h, CsrMatrix::from_dense(g_mat), g, set)
    }

    /// Builds a problem from sparse data. `H` must already be symmetric.
    pub fn from_sparse(hessian: CsrMatrix, linear: Vec<f64>, constraints: CsrMatrix, rhs: Vec<f64>, set: ConvexSet) -> Result<Self> {
        let n = hessian.rows();
        let check = |what, expected: usize, found: usize| {
            if expected == found {
                Ok(())
            } else {
                Err(Error::DimensionMismatch { what, expected, found })
            }
        };
        check("H columns", n, hessian.cols())?;
        check("h", n, linear.len())?;
        check("G columns", n, constraints.cols())?;
        check("g", constraints.rows(), rhs.len())?;
        check("feasible set", n, set.dim())?;
        if constraints.rows() > n {
            return Err(Error::RankDeficient { pivot: n, rows: constraints.rows(), value: 0.0 });
        }
        Ok(Self { hessian, linear, constraints, rhs, set })
    }

    /// Number of variables `n`.
    pub fn dim(&self) -> usize {
        self.hessian.rows()
    }

    /// Number of equality constraints `m`.
    pub fn num_constraints(&self) -> usize {
        self.constraints.rows()
    }

    pub fn hessian(&self) -> &CsrMatrix {
        &self.hessian
    }

    pub fn linear(&self) -> &[f64] {
        &self.linear
    }

    pub fn constraints(&self) -> &CsrMatrix {
        &self.constraints
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn set(&self) -> &ConvexSet {
        &self.set
    }

    fn check_primal(&self, z: &[f64]) -> Result<()> {
        if z.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { what: "primal vector", expected: self.dim(), found: z.len() })
        }
    }

    fn check_dual(&self, w: &[f64]) -> Result<()> {
        if w.len() == self.num_constraints() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { what: "dual vector", expected: self.num_constraints(), found: w.len() })
        }
    }

    /// `½ zᵀHz + hᵀz`
    pub fn objective(&self, z: &[f64]) -> Result<f64> {
        self.check_primal(z)?;
        Ok(0.5 * self.hessian.quad_form(z) + dot(&self.linear, z))
    }

    /// `Gz − g` written into `out`.
    pub fn constraint_residual_into(&self, z: &[f64], out: &mut [f64]) {
        self.constraints.mul_vec_into(z, out);
        for (o, g) in out.iter_mut().zip(&self.rhs) {
            *o -= g;
        }
    }

    pub fn constraint_residual(&self, z: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.num_constraints()];
        self.constraint_residual_into(z, &mut r);
        r
    }

    /// `Hz + h + Gᵀw`
    pub fn lagrangian_gradient(&self, z: &[f64], w: &[f64]) -> Vec<f64> {
        let mut grad = self.hessian.mul_vec(z);
        for (gi, hi) in grad.iter_mut().zip(&self.linear) {
            *gi += hi;
        }
        self.constraints.tmul_vec_acc(1.0, w, &mut grad);
        grad
    }

    /// `‖z − z⋆‖²_H`
    pub fn h_dist_sq(&self, z: &[f64], z_star: &[f64]) -> f64 {
        let d: Vec<f64> = z.iter().zip(z_star).map(|(a, b)| a - b).collect();
        self.hessian.quad_form(&d)
    }

    pub fn kkt_residual(&self, z: &[f64], w: &[f64]) -> Result<KktResidual> {
        self.check_primal(z)?;
        self.check_dual(w)?;
        let primal_eq = norm2(&self.constraint_residual(z));
        let proj = self.set.project(z)?;
        let primal_set = norm2(&z.iter().zip(&proj).map(|(a, b)| a - b).collect::<Vec<_>>());
        let grad = self.lagrangian_gradient(z, w);
        let step: Vec<f64> = z.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let fixed = self.set.project(&step)?;
        let stationarity = norm2(&z.iter().zip(&fixed).map(|(a, b)| a - b).collect::<Vec<_>>());
        Ok(KktResidual { primal_eq, primal_set, stationarity })
    }

    /// Cholesky of `GGᵀ`; a nonpositive pivot means `G` lacks full row rank.
    pub fn check_full_row_rank(&self) -> Result<()> {
        let g = self.constraints.to_dense();
        let m = g.rows();
        let mut a = DenseMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..=i {
                let v = dot(g.row(i), g.row(j));
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let scale = (0..m).fold(0.0f64, |s, i| s.max(a[(i, i)]));
        for j in 0..m {
            let mut d = a[(j, j)];
            for k in 0..j {
                d -= a[(j, k)] * a[(j, k)];
            }
            if d <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                return Err(Error::RankDeficient { pivot: j, rows: m, value: d });
            }
            let d = d.sqrt();
            a[(j, j)] = d;
            for i in (j + 1)..m {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v -= a[(i, k)] * a[(j, k)];
                }
                a[(i, j)] = v / d;
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ProblemDocument {
            h_mat: self.hessian.to_dense(),
            h: self.linear.clone(),
            g_mat: self.constraints.to_dense(),
            g: self.rhs.clone(),
            set: self.set.clone(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ProblemDocument = serde_json::from_str(s).map_err(|e| Error::Serialization(e.to_string()))?;
        let g_mat = if doc.g_mat.rows() == 0 { DenseMatrix::zeros(0, doc.h_mat.rows()) } else { doc.g_mat };
        Self::new(&doc.h_mat, doc.h, &g_mat, doc.g, doc.set)
    }
}

#[derive(Serialize, Deserialize)]
struct ProblemDocument {
    #[serde(rename = "H")]
    h_mat: DenseMatrix,
    h: Vec<f64>,
    #[serde(rename = "G")]
    g_mat: DenseMatrix,
    g: Vec<f64>,
    set: ConvexSet,
}

/// Optimality residuals of a primal-dual pair `(z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResidual {
    /// `‖Gz − g‖₂`
    pub primal_eq: f64,
    /// `‖z − π_Z[z]‖₂`
    pub primal_set: f64,
    /// `‖z − π_Z[z − (Hz + h + Gᵀw)]‖₂`
    pub stationarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.primal_eq.max(self.primal_set).max(self.stationarity)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}
