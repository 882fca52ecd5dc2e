//! Dense oracles shared by the integration tests. Operators on p1×p2
//! matrices are (p1p2)×(p1p2) matrices acting on column-major vec(M), so
//! M ↦ A M B is Bᵀ ⊗ A.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ss3::linalg::{haar_subspace, Subspace, TangentSpace};

pub fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    basis * basis.transpose()
}

pub fn dense_tangent(t: &TangentSpace) -> DMatrix<f64> {
    let (p1, p2) = t.dims();
    let pc = projector(t.col().basis());
    let pr = projector(t.row().basis());
    let i1 = DMatrix::<f64>::identity(p1, p1);
    let i2 = DMatrix::<f64>::identity(p2, p2);
    i2.kronecker(&pc) + pr.kronecker(&i1) - pr.kronecker(&pc)
}

pub fn dense_complement(t: &TangentSpace) -> DMatrix<f64> {
    let (p1, p2) = t.dims();
    DMatrix::<f64>::identity(p1 * p2, p1 * p2) - dense_tangent(t)
}

/// Projector onto span{u vᵀ}.
pub fn dense_span(u: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
    let m = u * v.transpose();
    let x = vec_of(&m);
    &x * x.transpose() / x.norm_squared()
}

pub fn random_tangent(p1: usize, p2: usize, r: usize, seed: u64) -> TangentSpace {
    TangentSpace::new(
        haar_subspace(p1, r, seed).unwrap(),
        haar_subspace(p2, r, seed ^ 0x5A5A_5A5A).unwrap(),
    )
    .unwrap()
}

pub fn coordinate_tangent(p1: usize, p2: usize, rows: &[usize], cols: &[usize]) -> TangentSpace {
    TangentSpace::new(Subspace::coordinate(p1, rows).unwrap(), Subspace::coordinate(p2, cols).unwrap()).unwrap()
}

/// Smallest eigenvalue of A restricted to the range of the projector P
/// (1 when the range is trivial).
pub fn restricted_min_eig(p: &DMatrix<f64>, a: &DMatrix<f64>) -> f64 {
    let e = SymmetricEigen::new(p.clone());
    let cols: Vec<DVector<f64>> = (0..e.eigenvalues.len())
        .filter(|&i| e.eigenvalues[i] > 0.5)
        .map(|i| e.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        return 1.0;
    }
    let q = DMatrix::from_columns(&cols);
    let g = q.transpose() * a * &q;
    SymmetricEigen::new(g).eigenvalues.min()
}

/// Mean of dense tangent projectors.
pub fn dense_average(ts: &[TangentSpace]) -> DMatrix<f64> {
    let n = ts[0].dims().0 * ts[0].dims().1;
    let mut acc = DMatrix::zeros(n, n);
    for t in ts {
        acc += dense_tangent(t);
    }
    acc / ts.len() as f64
}
