//! Rank-k compaction of an aligned field matrix.
//!
//! The matrix is approximated by `B·C` from a truncated SVD, the exact
//! residual `E` is kept, and a column-pivoted QR of `A = B·C` picks `k`
//! linearly independent views. The remaining views are expressed as
//! least-squares combinations `W` of the chosen ones, so restoring only the
//! `k` independent columns is enough to rebuild the whole matrix.

mod cache;
mod qr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lightfield::FieldMatrix;

pub use cache::{read_model, write_model};
pub use qr::PivotedQr;

/// Relative threshold on `|R_ii| / |R_11|` for a pivot to count as independent.
pub const PIVOT_TOLERANCE: f64 = 1e-9;

/// Truncated-SVD factors of a field matrix.
#[derive(Debug, Clone)]
pub struct Lra {
    /// `m × k`, first `k` columns of `U·Σ`.
    pub b: DMatrix<f64>,
    /// `k × n`, first `k` rows of `Vᵀ`.
    pub c: DMatrix<f64>,
    /// `m × n` residual `I − B·C`.
    pub e: DMatrix<f64>,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
}

impl Lra {
    pub fn rank(&self) -> usize {
        self.b.ncols()
    }

    pub fn approximation(&self) -> DMatrix<f64> {
        &self.b * &self.c
    }

    /// `‖E‖_F / √(mn)`.
    pub fn rmse(&self) -> f64 {
        self.e.norm() / ((self.e.nrows() * self.e.ncols()) as f64).sqrt()
    }
}

pub fn lra(mat: &FieldMatrix, k: usize) -> Result<Lra> {
    let (m, n) = mat.data.shape();
    if k == 0 || k > m.min(n) {
        return Err(Error::InvalidParameter(format!(
            "rank {k} outside 1..={}",
            m.min(n)
        )));
    }
    let svd = mat.data.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| Error::Decomposition("SVD returned no left vectors".into()))?;
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Decomposition("SVD returned no right vectors".into()))?;
    let sv = svd.singular_values;
    if sv.iter().any(|s| !s.is_finite()) {
        return Err(Error::Decomposition("non-finite singular value".into()));
    }
    let recomposed = &u * DMatrix::from_diagonal(&sv) * &vt;
    let drift = (&recomposed - &mat.data).norm();
    if drift > 1e-8 * mat.data.norm().max(1.0) {
        return Err(Error::Decomposition(format!(
            "SVD reconstruction error {drift:e}"
        )));
    }

    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let mut b = DMatrix::zeros(m, k);
    let mut c = DMatrix::zeros(k, n);
    for (j, &src) in order.iter().take(k).enumerate() {
        b.set_column(j, &(u.column(src) * sv[src]));
        c.set_row(j, &vt.row(src));
    }
    let e = &mat.data - &b * &c;
    Ok(Lra {
        b,
        c,
        e,
        singular_values: order.iter().map(|&i| sv[i]).collect(),
    })
}

/// Independent / dependent column partition of a rank-k matrix.
#[derive(Debug, Clone)]
pub struct ColumnSplit {
    /// `m × k`, columns of `A` at `indep_idx`.
    pub independent: DMatrix<f64>,
    /// `m × (n − k)`, the remaining columns in original order.
    pub dependent: DMatrix<f64>,
    /// 0-based, ascending.
    pub indep_idx: Vec<usize>,
}

impl ColumnSplit {
    /// Complement of `indep_idx` in `0..n`, ascending.
    pub fn dependent_idx(&self) -> Vec<usize> {
        let n = self.independent.ncols() + self.dependent.ncols();
        complement(&self.indep_idx, n)
    }
}

fn complement(idx: &[usize], n: usize) -> Vec<usize> {
    (0..n).filter(|i| !idx.contains(i)).collect()
}

/// Picks `k` independent columns of `a` by column-pivoted QR.
pub fn split_columns(a: &DMatrix<f64>, k: usize) -> Result<ColumnSplit> {
    let n = a.ncols();
    if k == 0 || k > n.min(a.nrows()) {
        return Err(Error::InvalidParameter(format!(
            "cannot pick {k} columns from a {}x{n} matrix",
            a.nrows()
        )));
    }
    let qr = PivotedQr::new(a, k);
    let achieved = qr.numerical_rank(PIVOT_TOLERANCE);
    if achieved < k {
        return Err(Error::RankDeficient {
            requested: k,
            achieved,
        });
    }
    let mut indep_idx = qr.perm[..k].to_vec();
    indep_idx.sort_unstable();
    Ok(gather(a, indep_idx))
}

/// Like [`split_columns`], but a rank below `k` is reported instead of
/// rejected: the first `k` pivots are kept whatever their size. Returns the
/// split and the numerical rank.
pub fn split_columns_lenient(a: &DMatrix<f64>, k: usize) -> Result<(ColumnSplit, usize)> {
    let n = a.ncols();
    if k == 0 || k > n.min(a.nrows()) {
        return Err(Error::InvalidParameter(format!(
            "cannot pick {k} columns from a {}x{n} matrix",
            a.nrows()
        )));
    }
    let qr = PivotedQr::new(a, k);
    let achieved = qr.numerical_rank(PIVOT_TOLERANCE);
    let mut indep_idx = qr.perm[..k].to_vec();
    indep_idx.sort_unstable();
    Ok((gather(a, indep_idx), achieved))
}

/// Splits `a` using a known index set.
pub fn gather(a: &DMatrix<f64>, indep_idx: Vec<usize>) -> ColumnSplit {
    let dep = complement(&indep_idx, a.ncols());
    let independent = a.select_columns(indep_idx.iter());
    let dependent = a.select_columns(dep.iter());
    ColumnSplit {
        independent,
        dependent,
        indep_idx,
    }
}

#[derive(Debug, Clone)]
pub struct Weights {
    /// `k × (n − k)`.
    pub w: DMatrix<f64>,
    /// 2-norm condition number of the independent block.
    pub condition: f64,
}

/// Least-squares `W` minimizing `‖Â − Ă·W‖_F`, i.e. `(ĂᵀĂ)†ĂᵀÂ`, solved
/// through a pivoted QR of `Ă` instead of forming the normal matrix.
/// Directions of `Ă` below the pivot tolerance are dropped, which gives the
/// pseudo-inverse behaviour on rank-deficient input.
pub fn compute_weights(indep: &DMatrix<f64>, dep: &DMatrix<f64>) -> Result<Weights> {
    if indep.nrows() != dep.nrows() {
        return Err(Error::Dimension(format!(
            "independent block has {} rows, dependent {}",
            indep.nrows(),
            dep.nrows()
        )));
    }
    let k = indep.ncols();
    let cols = dep.ncols();
    if k == 0 {
        return Err(Error::Dimension("empty independent block".into()));
    }
    let condition = condition_number(indep);
    let qr = PivotedQr::new(indep, k);
    let rank = qr.numerical_rank(PIVOT_TOLERANCE);
    let mut rhs = dep.clone();
    qr.apply_qt(&mut rhs);

    // Back-substitution on the leading rank × rank block of R.
    let mut z = DMatrix::zeros(k, cols);
    for col in 0..cols {
        for i in (0..rank).rev() {
            let mut acc = rhs[(i, col)];
            for j in i + 1..rank {
                acc -= qr.r[(i, j)] * z[(j, col)];
            }
            z[(i, col)] = acc / qr.r[(i, i)];
        }
    }
    let mut w = DMatrix::zeros(k, cols);
    for (j, &p) in qr.perm.iter().take(k).enumerate() {
        w.set_row(p, &z.row(j));
    }
    Ok(Weights { w, condition })
}

fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Rebuilds the full matrix: independent columns from `indep_hr`, dependent
/// ones as `indep_hr·W`, plus `E`, clamped to `[0, 1]`.
pub fn recombine(
    indep_hr: &DMatrix<f64>,
    w: &DMatrix<f64>,
    indep_idx: &[usize],
    e: &DMatrix<f64>,
) -> Result<FieldMatrix> {
    let (m, n) = e.shape();
    let k = indep_idx.len();
    if indep_hr.shape() != (m, k) || w.shape() != (k, n - k.min(n)) || k > n {
        return Err(Error::Dimension(format!(
            "recombine: Ă is {:?}, W is {:?}, E is {:?}, k = {k}",
            indep_hr.shape(),
            w.shape(),
            e.shape()
        )));
    }
    if indep_idx.iter().any(|&i| i >= n) {
        return Err(Error::OutOfRange(format!(
            "independent index beyond {n} columns"
        )));
    }
    let dependent = indep_hr * w;
    let dep_idx = complement(indep_idx, n);
    let mut out = e.clone();
    for (j, &col) in indep_idx.iter().enumerate() {
        let mut dst = out.column_mut(col);
        dst += indep_hr.column(j);
    }
    for (j, &col) in dep_idx.iter().enumerate() {
        let mut dst = out.column_mut(col);
        dst += dependent.column(j);
    }
    out.apply(|v| *v = v.clamp(0.0, 1.0));
    Ok(FieldMatrix::new(out))
}

/// Everything needed to restore an aligned light field from its compacted
/// embedding.
#[derive(Debug, Clone)]
pub struct RankKModel {
    pub k: usize,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub indep_idx: Vec<usize>,
    pub w: DMatrix<f64>,
}

impl RankKModel {
    /// `lra` → `split_columns` → `compute_weights`.
    pub fn fit(mat: &FieldMatrix, k: usize) -> Result<RankKModel> {
        let lra = lra(mat, k)?;
        let a = lra.approximation();
        let split = split_columns(&a, k)?;
        let weights = compute_weights(&split.independent, &split.dependent)?;
        Ok(RankKModel {
            k,
            b: lra.b,
            c: lra.c,
            e: lra.e,
            indep_idx: split.indep_idx,
            w: weights.w,
        })
    }

    /// [`RankKModel::fit`] that tolerates matrices of rank below `k`
    /// (e.g. flat scenes); also returns the numerical rank of `B·C`.
    pub fn fit_lenient(mat: &FieldMatrix, k: usize) -> Result<(RankKModel, usize)> {
        let lra = lra(mat, k)?;
        let a = lra.approximation();
        let (split, achieved) = split_columns_lenient(&a, k)?;
        let weights = compute_weights(&split.independent, &split.dependent)?;
        let model = RankKModel {
            k,
            b: lra.b,
            c: lra.c,
            e: lra.e,
            indep_idx: split.indep_idx,
            w: weights.w,
        };
        Ok((model, achieved))
    }

    pub fn approximation(&self) -> DMatrix<f64> {
        &self.b * &self.c
    }

    /// `Ă`: the independent columns of `B·C`.
    pub fn embedding(&self) -> DMatrix<f64> {
        let a = self.approximation();
        a.select_columns(self.indep_idx.iter())
    }

    pub fn recombine(&self, indep_hr: &DMatrix<f64>) -> Result<FieldMatrix> {
        recombine(indep_hr, &self.w, &self.indep_idx, &self.e)
    }
}
