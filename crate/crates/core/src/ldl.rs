//! Banded LDLᵀ for the saddle-point matrix
//!
//! ```text
//!     K = [ H + ρI   Gᵀ ]
//!         [ G        0  ]
//! ```
//!
//! The factorization runs without pivoting on a symmetric permutation that
//! keeps each multiplier row right after the last primal column it touches.
//! For stage-structured problems this gives a bandwidth of about `2nₓ + nᵤ`.

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;

/// Pivots with magnitude below this times the largest diagonal entry of `K`
/// are treated as zero.
const PIVOT_THRESHOLD: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct SaddleFactor {
    n: usize,
    m: usize,
    /// `perm[p]` is the original index of permuted position `p`.
    perm: Vec<usize>,
    /// `pos[i]` is the permuted position of original index `i`.
    pos: Vec<usize>,
    bandwidth: usize,
    /// Strictly lower band of `L`, row-major, `bandwidth` entries per row.
    lower: Vec<f64>,
    diag: Vec<f64>,
}

impl SaddleFactor {
    /// Factors `[H + shift·I, Gᵀ; G, 0]`.
    pub fn new(h: &CsrMatrix, shift: f64, g: &CsrMatrix) -> Result<Self> {
        let n = h.rows();
        let m = g.rows();
        if h.cols() != n {
            return Err(Error::DimensionMismatch { what: "H columns", expected: n, found: h.cols() });
        }
        if g.cols() != n {
            return Err(Error::DimensionMismatch { what: "G columns", expected: n, found: g.cols() });
        }

        let mut attach: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..m {
            let last = g.row_entries(i).map(|(j, _)| j).max().ok_or(Error::SingularKkt { index: n + i })?;
            attach[last].push(i);
        }
        let mut perm = Vec::with_capacity(n + m);
        for (j, rows) in attach.iter().enumerate() {
            perm.push(j);
            perm.extend(rows.iter().map(|i| n + i));
        }
        let mut pos = vec![0; n + m];
        for (p, &i) in perm.iter().enumerate() {
            pos[i] = p;
        }

        // Lower-triangle entries of the permuted matrix.
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(h.nnz() + g.nnz() + n);
        for i in 0..n {
            let mut diag = shift;
            for (j, v) in h.row_entries(i) {
                if j == i {
                    diag += v;
                } else if pos[i] > pos[j] {
                    entries.push((pos[i], pos[j], v));
                }
            }
            entries.push((pos[i], pos[i], diag));
        }
        for i in 0..m {
            for (j, v) in g.row_entries(i) {
                let (a, b) = (pos[n + i], pos[j]);
                entries.push((a.max(b), a.min(b), v));
            }
        }
        let bandwidth = entries.iter().map(|&(r, c, _)| r - c).max().unwrap_or(0);
        let size = n + m;
        let mut lower = vec![0.0; size * bandwidth];
        let mut diag = vec![0.0; size];
        for &(r, c, v) in &entries {
            if r == c {
                diag[r] += v;
            } else {
                lower[r * bandwidth + (c + bandwidth - r)] += v;
            }
        }
        let scale = diag.iter().fold(0.0_f64, |s, d| s.max(d.abs())).max(1.0);

        let mut factor = Self { n, m, perm, pos, bandwidth, lower, diag };
        factor.factorize(scale)?;
        Ok(factor)
    }

    fn lo(&self, row: usize) -> usize {
        row.saturating_sub(self.bandwidth)
    }

    fn l(&self, row: usize, col: usize) -> f64 {
        self.lower[row * self.bandwidth + (col + self.bandwidth - row)]
    }

    fn factorize(&mut self, scale: f64) -> Result<()> {
        let bw = self.bandwidth;
        for i in 0..self.n + self.m {
            let lo_i = self.lo(i);
            for j in lo_i..i {
                let mut s = self.l(i, j);
                for k in lo_i.max(self.lo(j))..j {
                    s -= self.l(i, k) * self.diag[k] * self.l(j, k);
                }
                self.lower[i * bw + (j + bw - i)] = s / self.diag[j];
            }
            let mut d = self.diag[i];
            for k in lo_i..i {
                let lik = self.l(i, k);
                d -= lik * lik * self.diag[k];
            }
            if !(d.abs() > PIVOT_THRESHOLD * scale) {
                return Err(Error::SingularKkt { index: self.perm[i] });
            }
            self.diag[i] = d;
        }
        Ok(())
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn size(&self) -> usize {
        self.n + self.m
    }

    /// Number of negative pivots; equals `m` for a quasi-definite `K`.
    pub fn negative_pivots(&self) -> usize {
        self.diag.iter().filter(|d| **d < 0.0).count()
    }

    /// Solves `K x = rhs` in the original ordering.
    pub fn solve(&self, rhs: &[f64], out: &mut [f64]) {
        let size = self.size();
        assert_eq!(rhs.len(), size, "rhs length");
        assert_eq!(out.len(), size, "solution length");
        let mut y: Vec<f64> = self.perm.iter().map(|&i| rhs[i]).collect();
        for i in 0..size {
            let mut s = y[i];
            for k in self.lo(i)..i {
                s -= self.l(i, k) * y[k];
            }
            y[i] = s;
        }
        for (yi, d) in y.iter_mut().zip(&self.diag) {
            *yi /= d;
        }
        for i in (0..size).rev() {
            let mut s = y[i];
            let hi = (i + self.bandwidth + 1).min(size);
            for k in i + 1..hi {
                s -= self.l(k, i) * y[k];
            }
            y[i] = s;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o = y[self.pos[i]];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    fn apply(h: &CsrMatrix, shift: f64, g: &CsrMatrix, x: &[f64]) -> Vec<f64> {
        let n = h.rows();
        let mut top = h.mul_vec(&x[..n]);
        for (t, xi) in top.iter_mut().zip(&x[..n]) {
            *t += shift * xi;
        }
        let gt = g.tmul_vec(&x[n..]);
        for (t, v) in top.iter_mut().zip(gt) {
            *t += v;
        }
        top.extend(g.mul_vec(&x[..n]));
        top
    }

    #[test]
    fn solves_small_dense_system() {
        let h = CsrMatrix::from_dense(&DenseMatrix::from_rows(&[vec![2.0, 0.5, 0.0], vec![0.5, 1.0, 0.3], vec![0.0, 0.3, 3.0]]).unwrap());
        let g = CsrMatrix::from_dense(&DenseMatrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 1.0, -1.0]]).unwrap());
        let f = SaddleFactor::new(&h, 0.5, &g).unwrap();
        assert_eq!(f.negative_pivots(), 2);
        let rhs = [1.0, -2.0, 0.5, 3.0, -1.0];
        let mut x = [0.0; 5];
        f.solve(&rhs, &mut x);
        let back = apply(&h, 0.5, &g, &x);
        for (b, r) in back.iter().zip(rhs) {
            assert!((b - r).abs() <= 1e-12);
        }
    }

    #[test]
    fn dependent_rows_are_singular() {
        let h = CsrMatrix::from_dense(&DenseMatrix::identity(2));
        let g = CsrMatrix::from_dense(&DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]]).unwrap());
        assert!(matches!(SaddleFactor::new(&h, 0.0, &g), Err(Error::SingularKkt { .. })));
        let empty_row = CsrMatrix::from_dense(&DenseMatrix::from_rows(&[vec![0.0, 0.0]]).unwrap());
        assert!(matches!(SaddleFactor::new(&h, 0.0, &empty_row), Err(Error::SingularKkt { .. })));
    }

    #[test]
    fn stage_structure_keeps_band_narrow() {
        let tp = crate::mpc::build_benchmark(25).unwrap();
        let qp = tp.lift().unwrap();
        let f = SaddleFactor::new(qp.hessian(), 0.5, qp.constraints()).unwrap();
        assert!(f.bandwidth() <= 2 * 4 + 2 + 4, "bandwidth {}", f.bandwidth());
        let rhs: Vec<f64> = (0..f.size()).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let mut x = vec![0.0; f.size()];
        f.solve(&rhs, &mut x);
        let back = apply(qp.hessian(), 0.5, qp.constraints(), &x);
        let err = back.iter().zip(&rhs).map(|(b, r)| (b - r).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-10, "residual {err}");
    }
}
