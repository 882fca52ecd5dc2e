use nalgebra::DMatrix;

use crate::error::{invalid, mismatch, Result};
use crate::numeric;
use crate::rng::{self, Rng};

use super::ORTHO_TOL;

/// Linear subspace of R^n stored through an orthonormal basis (n × rank).
#[derive(Clone, Debug, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    pub fn zero(ambient: usize) -> Self {
        Self {
            basis: DMatrix::zeros(ambient, 0),
        }
    }

    pub fn full(ambient: usize) -> Self {
        Self {
            basis: DMatrix::identity(ambient, ambient),
        }
    }

    /// Span of the listed standard basis vectors (0-based, any order).
    pub fn coordinate(ambient: usize, indices: &[usize]) -> Result<Self> {
        let mut idx = indices.to_vec();
        idx.sort_unstable();
        idx.dedup();
        if idx.len() != indices.len() {
            return Err(invalid("repeated coordinate index"));
        }
        if idx.last().is_some_and(|&i| i >= ambient) {
            return Err(invalid(format!("coordinate index out of range for ambient {ambient}")));
        }
        let mut basis = DMatrix::zeros(ambient, idx.len());
        for (k, &i) in idx.iter().enumerate() {
            basis[(i, k)] = 1.0;
        }
        Ok(Self { basis })
    }

    /// Wraps a basis after checking orthonormality.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        if !basis.iter().all(|x| x.is_finite()) {
            return Err(invalid("basis has non-finite entries"));
        }
        let k = basis.ncols();
        if k > basis.nrows() {
            return Err(invalid("more basis vectors than ambient dimension"));
        }
        let gram = basis.transpose() * &basis;
        let err = (gram - DMatrix::<f64>::identity(k, k)).amax();
        if err > ORTHO_TOL {
            return Err(invalid(format!("basis is not orthonormal (deviation {err:.3e})")));
        }
        Ok(Self { basis })
    }

    /// Caller guarantees orthonormal columns (e.g. eigenvectors, SVD factors).
    pub(crate) fn from_orthonormal_unchecked(basis: DMatrix<f64>) -> Self {
        debug_assert!({
            let k = basis.ncols();
            (basis.transpose() * &basis - DMatrix::<f64>::identity(k, k)).amax() < 1e-8
        });
        Self { basis }
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn into_basis(self) -> DMatrix<f64> {
        self.basis
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// P_S · x for a matrix of column vectors x.
    pub fn project(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        if self.rank() == 0 {
            return DMatrix::zeros(x.nrows(), x.ncols());
        }
        &self.basis * (self.basis.transpose() * x)
    }

    /// (I − P_S) · x.
    pub fn project_complement(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        x - self.project(x)
    }

    /// Orthonormal basis of the orthogonal complement.
    pub fn complement(&self) -> Subspace {
        let n = self.ambient_dim();
        let r = self.rank();
        if r == 0 {
            return Subspace::full(n);
        }
        if r == n {
            return Subspace::zero(n);
        }
        let q = DMatrix::<f64>::identity(n, n) - self.projector();
        // Singular values of I − P are exactly 0 or 1, so any cut in between works.
        let dec = numeric::svd(&q).expect("finite projector");
        let keep = n - r;
        Subspace::from_orthonormal_unchecked(dec.u.columns(0, keep).into_owned())
    }

    /// Square orthogonal matrix whose leading columns are this basis,
    /// followed by a basis of the complement.
    pub fn completed_frame(&self) -> DMatrix<f64> {
        let n = self.ambient_dim();
        let comp = self.complement();
        let mut full = DMatrix::zeros(n, n);
        full.columns_mut(0, self.rank()).copy_from(&self.basis);
        full.columns_mut(self.rank(), comp.rank()).copy_from(comp.basis());
        full
    }

    /// trace(P_S P_other) = ‖B_Sᵀ B_other‖_F².
    pub fn overlap(&self, other: &Subspace) -> Result<f64> {
        self.check_same_ambient(other)?;
        if self.rank() == 0 || other.rank() == 0 {
            return Ok(0.0);
        }
        Ok((self.basis.transpose() * &other.basis).norm_squared())
    }

    /// Subspace spanned by the first `k` basis vectors.
    pub fn leading(&self, k: usize) -> Subspace {
        let k = k.min(self.rank());
        Subspace {
            basis: self.basis.columns(0, k).into_owned(),
        }
    }

    pub(crate) fn check_same_ambient(&self, other: &Subspace) -> Result<()> {
        if self.ambient_dim() != other.ambient_dim() {
            return Err(mismatch(format!(
                "subspaces live in R^{} and R^{}",
                self.ambient_dim(),
                other.ambient_dim()
            )));
        }
        Ok(())
    }
}

/// Orthonormal basis for the span of the columns of `a`, keeping singular
/// directions above `tol · σ_max`.
pub fn orthonormalize(a: &DMatrix<f64>, tol: f64) -> Result<Subspace> {
    if !(tol > 0.0) {
        return Err(invalid("tolerance must be positive"));
    }
    if !a.iter().all(|x| x.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    let n = a.nrows();
    if a.ncols() == 0 || n == 0 {
        return Ok(Subspace::zero(n));
    }
    let dec = numeric::svd(a)?;
    let smax = dec.s[0];
    if smax == 0.0 {
        return Ok(Subspace::zero(n));
    }
    let keep = dec.s.iter().take_while(|&&s| s > tol * smax).count();
    Ok(Subspace::from_orthonormal_unchecked(dec.u.columns(0, keep).into_owned()))
}

/// Haar-distributed `rank`-dimensional subspace of R^ambient.
pub fn haar_subspace(ambient: usize, rank: usize, seed: u64) -> Result<Subspace> {
    if rank > ambient {
        return Err(invalid(format!("rank {rank} exceeds ambient dimension {ambient}")));
    }
    let mut rng = rng::seeded(seed);
    Ok(haar_subspace_with(&mut rng, ambient, rank))
}

/// Gaussian QR with the R diagonal made positive.
pub fn haar_subspace_with(rng: &mut Rng, ambient: usize, rank: usize) -> Subspace {
    assert!(rank <= ambient);
    if rank == 0 {
        return Subspace::zero(ambient);
    }
    let g = rng::gaussian_matrix(rng, ambient, rank);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..rank {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Subspace::from_orthonormal_unchecked(q)
}

/// Haar-distributed orthogonal matrix.
pub fn haar_orthogonal(rng: &mut Rng, n: usize) -> DMatrix<f64> {
    haar_subspace_with(rng, n, n).into_basis()
}

/// Principal angles in ascending order, length min(rank1, rank2).
pub fn principal_angles(s1: &Subspace, s2: &Subspace) -> Result<Vec<f64>> {
    s1.check_same_ambient(s2)?;
    if s1.rank() == 0 || s2.rank() == 0 {
        return Ok(Vec::new());
    }
    let cross = s1.basis().transpose() * s2.basis();
    Ok(numeric::singular_values(&cross)
        .into_iter()
        .map(|c| c.clamp(0.0, 1.0).acos())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gives_full_space() {
        let s = orthonormalize(&DMatrix::identity(3, 3), 1e-8).unwrap();
        assert_eq!(s.rank(), 3);
        assert!((s.projector() - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn zero_matrix_gives_zero_space() {
        let s = orthonormalize(&DMatrix::zeros(4, 2), 1e-8).unwrap();
        assert_eq!(s.rank(), 0);
        assert_eq!(s.ambient_dim(), 4);
    }

    #[test]
    fn rank_one_column_span() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let s = orthonormalize(&a, 1e-8).unwrap();
        assert_eq!(s.rank(), 1);
        let b = s.basis();
        let expect = [1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
        let sign = b[(0, 0)].signum();
        assert!((sign * b[(0, 0)] - expect[0]).abs() < 1e-12);
        assert!((sign * b[(1, 0)] - expect[1]).abs() < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let a = DMatrix::from_element(2, 2, f64::NAN);
        assert!(orthonormalize(&a, 1e-8).is_err());
    }

    #[test]
    fn haar_edge_ranks() {
        assert_eq!(haar_subspace(5, 0, 3).unwrap().rank(), 0);
        let full = haar_subspace(5, 5, 1).unwrap();
        assert!((full.projector() - DMatrix::<f64>::identity(5, 5)).amax() < 1e-10);
        assert!(haar_subspace(3, 4, 0).is_err());
    }

    #[test]
    fn haar_is_deterministic() {
        assert_eq!(haar_subspace(7, 3, 11).unwrap(), haar_subspace(7, 3, 11).unwrap());
        assert_ne!(haar_subspace(7, 3, 11).unwrap(), haar_subspace(7, 3, 12).unwrap());
    }

    #[test]
    fn complement_is_orthogonal_and_exhaustive() {
        let s = haar_subspace(6, 2, 5).unwrap();
        let c = s.complement();
        assert_eq!(c.rank(), 4);
        assert!(s.overlap(&c).unwrap() < 1e-20);
        let sum = s.projector() + c.projector();
        assert!((sum - DMatrix::<f64>::identity(6, 6)).amax() < 1e-12);
    }

    #[test]
    fn angles_of_equal_and_orthogonal_spans() {
        let s = haar_subspace(6, 3, 2).unwrap();
        assert!(principal_angles(&s, &s).unwrap().iter().all(|a| a.abs() < 1e-7));
        let a = Subspace::coordinate(4, &[0, 1]).unwrap();
        let b = Subspace::coordinate(4, &[2, 3]).unwrap();
        for t in principal_angles(&a, &b).unwrap() {
            assert!((t - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        }
    }
}
