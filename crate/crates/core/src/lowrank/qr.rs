//! Householder QR with column pivoting.

use nalgebra::{DMatrix, DVector};

/// Result of a column-pivoted QR factorization `A·P = Q·R`.
#[derive(Debug, Clone)]
pub struct PivotedQr {
    /// Householder vectors, one per eliminated column (length `m − j`).
    reflectors: Vec<(DVector<f64>, f64)>,
    /// Upper-trapezoidal factor, `steps × n`.
    pub r: DMatrix<f64>,
    /// `perm[j]` is the original index of the j-th pivot column.
    pub perm: Vec<usize>,
}

impl PivotedQr {
    /// Factorizes up to `max_steps` columns. At each step the remaining
    /// column with the largest residual norm is pivoted in (lowest index on
    /// ties).
    pub fn new(a: &DMatrix<f64>, max_steps: usize) -> Self {
        let (m, n) = a.shape();
        let steps = max_steps.min(m).min(n);
        let mut work = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut reflectors = Vec::with_capacity(steps);

        for j in 0..steps {
            // Exact residual norms; m·n per step is cheap next to the update.
            let mut best = j;
            let mut best_norm = -1.0;
            for c in j..n {
                let norm2: f64 = work.view((j, c), (m - j, 1)).iter().map(|v| v * v).sum();
                if norm2 > best_norm || (norm2 == best_norm && perm[c] < perm[best]) {
                    best_norm = norm2;
                    best = c;
                }
            }
            if best != j {
                work.swap_columns(j, best);
                perm.swap(j, best);
            }

            let x = work.view((j, j), (m - j, 1)).clone_owned();
            let alpha = x.norm();
            let mut v = DVector::from_column_slice(x.as_slice());
            let beta = if alpha == 0.0 {
                0.0
            } else {
                let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
                v[0] += sign * alpha;
                let vnorm2 = v.norm_squared();
                if vnorm2 > 0.0 { 2.0 / vnorm2 } else { 0.0 }
            };
            if beta != 0.0 {
                // work[j.., j..] -= beta · v · (vᵀ · work[j.., j..])
                let mut block = work.view_mut((j, j), (m - j, n - j));
                let proj = block.tr_mul(&v);
                block.ger(-beta, &v, &proj, 1.0);
            }
            for r in j + 1..m {
                work[(r, j)] = 0.0;
            }
            reflectors.push((v, beta));
        }

        let r = work.rows(0, steps).into_owned();
        Self {
            reflectors,
            r,
            perm,
        }
    }

    /// Absolute values of the diagonal of `R`.
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.r.nrows()).map(|i| self.r[(i, i)].abs()).collect()
    }

    /// Number of diagonal entries with `|R_ii| > tol·|R_11|`.
    pub fn numerical_rank(&self, tol: f64) -> usize {
        let d = self.diagonal();
        let Some(&first) = d.first() else { return 0 };
        if first == 0.0 {
            return 0;
        }
        d.iter().take_while(|&&v| v > tol * first).count()
    }

    /// Applies `Qᵀ` to `b` in place.
    pub fn apply_qt(&self, b: &mut DMatrix<f64>) {
        let m = b.nrows();
        let cols = b.ncols();
        for (j, (v, beta)) in self.reflectors.iter().enumerate() {
            if *beta == 0.0 {
                continue;
            }
            let mut block = b.view_mut((j, 0), (m - j, cols));
            let proj = block.tr_mul(v);
            block.ger(-*beta, v, &proj, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_permuted_matrix() {
        let a = DMatrix::from_fn(6, 4, |i, j| ((i * 7 + j * 3) % 5) as f64 + 0.1 * j as f64);
        let qr = PivotedQr::new(&a, 4);
        // Qᵀ·A·P must equal R.
        let mut ap = DMatrix::zeros(6, 4);
        for (j, &p) in qr.perm.iter().enumerate() {
            ap.set_column(j, &a.column(p));
        }
        qr.apply_qt(&mut ap);
        for i in 0..4 {
            for j in 0..4 {
                assert!((ap[(i, j)] - qr.r[(i, j)]).abs() < 1e-12);
            }
        }
        for i in 4..6 {
            for j in 0..4 {
                assert!(ap[(i, j)].abs() < 1e-12);
            }
        }
        let d = qr.diagonal();
        assert!(d.windows(2).all(|w| w[0] >= w[1] - 1e-12));
    }

    #[test]
    fn detects_rank() {
        let c = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let d = DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0]);
        let a = DMatrix::from_columns(&[c.clone(), c.clone() * 2.0, d, c * -1.0]);
        assert_eq!(PivotedQr::new(&a, 4).numerical_rank(1e-9), 2);
    }
}
