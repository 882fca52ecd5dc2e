//! Small numerical helpers shared across modules.

use nalgebra::{DMatrix, DVector};
use nalgebra_lapack::{SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Ties closer than this are ordered by original index.
pub const EIGEN_TIE_TOL: f64 = 1e-10;

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = CompensatedSum::new();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = compensated_sum(xs.iter().copied()) / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(xs.iter().map(|x| (x - mean) * (x - mean)));
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Entrywise compensated average of equally sized matrices, in slice order.
pub fn average_matrices<'a, I>(mats: I, rows: usize, cols: usize) -> DMatrix<f64>
where
    I: IntoIterator<Item = &'a DMatrix<f64>>,
{
    let mut sums = vec![CompensatedSum::new(); rows * cols];
    let mut count = 0usize;
    for m in mats {
        for (acc, &x) in sums.iter_mut().zip(m.as_slice()) {
            acc.add(x);
        }
        count += 1;
    }
    let scale = if count == 0 { 0.0 } else { 1.0 / count as f64 };
    DMatrix::from_iterator(rows, cols, sums.iter().map(|s| s.value() * scale))
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
/// Near-ties keep the solver's original column order.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let sym = symmetrize(m);
    let eig = SymmetricEigen::try_new(sym.clone()).unwrap_or_else(|| {
        let e = nalgebra::SymmetricEigen::new(sym);
        SymmetricEigen {
            eigenvalues: e.eigenvalues,
            eigenvectors: e.eigenvectors,
        }
    });
    let order = descending_order(eig.eigenvalues.as_slice());
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

pub fn sym_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut v = lapack_eigenvalues(symmetrize(m))
        .unwrap_or_else(|| symmetrize(m).symmetric_eigenvalues().iter().copied().collect());
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn lapack_eigenvalues(mut m: DMatrix<f64>) -> Option<Vec<f64>> {
    let n = m.nrows() as i32;
    let mut w = vec![0.0; m.nrows()];
    let mut info = 0;
    let mut query = [0.0];
    unsafe { lapack::dsyev(b'N', b'L', n, m.as_mut_slice(), n, &mut w, &mut query, -1, &mut info) };
    if info != 0 {
        return None;
    }
    let lwork = query[0] as i32;
    let mut work = vec![0.0; lwork.max(1) as usize];
    unsafe { lapack::dsyev(b'N', b'L', n, m.as_mut_slice(), n, &mut w, &mut work, lwork, &mut info) };
    (info == 0).then_some(w)
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues_desc(m).last().copied().unwrap_or(f64::INFINITY)
}

/// Moore–Penrose inverse of a symmetric matrix; eigenvalues below
/// rel_tol·λ_max in magnitude are treated as zero.
pub fn pinv_sym(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let (l, w) = sym_eigen_desc(m);
    let top = l.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for (k, &lk) in l.iter().enumerate() {
        if lk.abs() > rel_tol * top && lk != 0.0 {
            let c = w.column(k);
            out.ger(1.0 / lk, &c, &c, 1.0);
        }
    }
    out
}

fn descending_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    // Within clusters of near-equal values fall back to index order.
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[start]] - values[order[end]] <= EIGEN_TIE_TOL {
            end += 1;
        }
        order[start..end].sort_unstable();
        start = end;
    }
    order
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Thin SVD with singular values in descending order.
pub struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

pub fn svd(m: &DMatrix<f64>) -> Result<Svd> {
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return Ok(Svd {
            u: DMatrix::zeros(r, 0),
            s: Vec::new(),
            v: DMatrix::zeros(c, 0),
        });
    }
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let dec = SVD::new(m.clone()).ok_or_else(|| Error::Numerical("SVD failed to converge".into()))?;
    let raw = dec.singular_values.as_slice();
    if !raw.iter().all(|x| x.is_finite()) {
        return Err(Error::Numerical("SVD produced non-finite singular values".into()));
    }
    let order = descending_order(raw);
    let uu = DMatrix::from_fn(r, k, |i, j| dec.u[(i, order[j])]);
    let vv = DMatrix::from_fn(c, k, |i, j| dec.vt[(order[j], i)]);
    let s = order.iter().map(|&i| raw[i]).collect();
    Ok(Svd { u: uu, s, v: vv })
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    match svd(m) {
        Ok(d) => d.s,
        // Less accurate for small values, but never fails.
        Err(_) => sym_eigenvalues_desc(&m.tr_mul(m))
            .into_iter()
            .take(m.nrows().min(m.ncols()))
            .map(|x| x.max(0.0).sqrt())
            .collect(),
    }
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut xs = vec![1e16];
        xs.extend(std::iter::repeat(1.0).take(1000));
        xs.push(-1e16);
        assert_eq!(compensated_sum(xs), 1000.0);
    }

    #[test]
    fn eigen_sorted_descending() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, 3.0, 1.0]));
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_eq!(vals.as_slice(), &[3.0, 1.0, 0.2]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_follow_index_order() {
        let order = descending_order(&[1.0, 2.0, 1.0 + 1e-13, 2.0]);
        assert_eq!(order, vec![1, 3, 0, 2]);
    }

    #[test]
    fn svd_reconstructs() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 7.0]);
        let d = svd(&m).unwrap();
        assert!(d.s[0] >= d.s[1]);
        let rec = &d.u * DMatrix::from_diagonal(&DVector::from_vec(d.s.clone())) * d.v.transpose();
        assert!((rec - m).norm() < 1e-12);
    }

    #[test]
    fn mean_sd_matches_hand_values() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
