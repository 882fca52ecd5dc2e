use nalgebra::DMatrix;

use crate::error::{invalid, mismatch, Result};

use super::Subspace;

/// Tangent space T(C, R) = { P_C M + M P_R − P_C M P_R } of the rank-r
/// variety in R^{p1×p2}.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentSpace {
    col: Subspace,
    row: Subspace,
}

pub fn tangent_dim(p1: usize, p2: usize, r: usize) -> usize {
    r * (p1 + p2) - r * r
}

impl TangentSpace {
    pub fn new(col: Subspace, row: Subspace) -> Result<Self> {
        if col.rank() != row.rank() {
            return Err(invalid(format!(
                "column rank {} differs from row rank {}",
                col.rank(),
                row.rank()
            )));
        }
        Ok(Self { col, row })
    }

    pub fn zero(p1: usize, p2: usize) -> Self {
        Self {
            col: Subspace::zero(p1),
            row: Subspace::zero(p2),
        }
    }

    /// The whole matrix space, as the tangent space at a full-rank point.
    pub fn full(p1: usize, p2: usize) -> Self {
        let r = p1.min(p2);
        let idx: Vec<usize> = (0..r).collect();
        Self {
            col: Subspace::coordinate(p1, &idx).expect("in range"),
            row: Subspace::coordinate(p2, &idx).expect("in range"),
        }
    }

    pub fn col(&self) -> &Subspace {
        &self.col
    }

    pub fn row(&self) -> &Subspace {
        &self.row
    }

    pub fn rank(&self) -> usize {
        self.col.rank()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.col.ambient_dim(), self.row.ambient_dim())
    }

    pub fn dim(&self) -> usize {
        let (p1, p2) = self.dims();
        tangent_dim(p1, p2, self.rank())
    }

    /// Dimension of T⊥, i.e. (p1 − r)(p2 − r).
    pub fn complement_dim(&self) -> usize {
        let (p1, p2) = self.dims();
        (p1 - self.rank()) * (p2 - self.rank())
    }

    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(m - self.apply_complement(m)?)
    }

    /// P_{C⊥} M P_{R⊥}.
    pub fn apply_complement(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_matrix(m)?;
        let left = self.col.project_complement(m);
        let right = self.row.project(&left.transpose()).transpose();
        Ok(left - right)
    }

    /// ‖P_T(u vᵀ)‖_F² for unit vectors, = 1 − ‖P_{C⊥}u‖²‖P_{R⊥}v‖².
    pub fn rank_one_energy(&self, u: &[f64], v: &[f64]) -> f64 {
        self.rank_one_split(u, v).0
    }

    /// (‖P_T(u vᵀ)‖², ‖P_{T⊥}(u vᵀ)‖²) relative to ‖u vᵀ‖². Both parts are
    /// sums of nonnegative terms, so neither loses precision near 0 or 1.
    pub fn rank_one_split(&self, u: &[f64], v: &[f64]) -> (f64, f64) {
        let (iu, cu) = split_norm_sq(&self.col, u);
        let (iv, cv) = split_norm_sq(&self.row, v);
        let total = (iu + cu) * (iv + cv);
        if total <= 0.0 {
            return (0.0, 0.0);
        }
        ((iu * (iv + cv) + cu * iv) / total, cu * cv / total)
    }

    pub(crate) fn check_same_dims(&self, other: &TangentSpace) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(mismatch(format!(
                "tangent spaces of {:?} and {:?} matrices",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }

    pub(crate) fn check_matrix(&self, m: &DMatrix<f64>) -> Result<()> {
        if m.shape() != self.dims() {
            return Err(mismatch(format!(
                "matrix is {:?} but tangent space acts on {:?}",
                m.shape(),
                self.dims()
            )));
        }
        Ok(())
    }
}

/// (‖P x‖², ‖x − P x‖²) with the residual formed explicitly.
fn split_norm_sq(s: &Subspace, x: &[f64]) -> (f64, f64) {
    let x = nalgebra::DVector::from_column_slice(x);
    if s.rank() == 0 {
        return (0.0, x.norm_squared());
    }
    let coeffs = s.basis().tr_mul(&x);
    let resid = x - s.basis() * &coeffs;
    (coeffs.norm_squared(), resid.norm_squared())
}

pub fn tangent_apply(t: &TangentSpace, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    t.apply(m)
}

pub fn tangent_apply_complement(t: &TangentSpace, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    t.apply_complement(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_subspace;
    use crate::rng;

    fn random_tangent(p1: usize, p2: usize, r: usize, seed: u64) -> TangentSpace {
        TangentSpace::new(haar_subspace(p1, r, seed).unwrap(), haar_subspace(p2, r, seed + 1000).unwrap()).unwrap()
    }

    #[test]
    fn full_rank_is_identity() {
        let t = random_tangent(4, 4, 4, 1);
        let m = rng::gaussian_matrix(&mut rng::seeded(2), 4, 4);
        assert!((t.apply(&m).unwrap() - &m).amax() < 1e-12);
        let wide = TangentSpace::full(3, 5);
        let m = rng::gaussian_matrix(&mut rng::seeded(3), 3, 5);
        assert!((wide.apply(&m).unwrap() - &m).amax() < 1e-12);
    }

    #[test]
    fn zero_rank_annihilates() {
        let t = TangentSpace::zero(3, 5);
        let m = rng::gaussian_matrix(&mut rng::seeded(2), 3, 5);
        assert_eq!(t.apply(&m).unwrap().amax(), 0.0);
    }

    #[test]
    fn idempotent_and_complementary() {
        let t = random_tangent(6, 5, 2, 9);
        let m = rng::gaussian_matrix(&mut rng::seeded(4), 6, 5);
        let pm = t.apply(&m).unwrap();
        assert!((t.apply(&pm).unwrap() - &pm).amax() < 1e-12);
        let qm = t.apply_complement(&m).unwrap();
        assert!((&pm + &qm - &m).amax() < 1e-12);
        assert!(pm.dot(&qm).abs() < 1e-12);
    }

    #[test]
    fn rank_one_energy_matches_apply() {
        let t = random_tangent(5, 4, 2, 3);
        let mut g = rng::seeded(8);
        let mut u = rng::gaussian_matrix(&mut g, 5, 1);
        let mut v = rng::gaussian_matrix(&mut g, 4, 1);
        u /= u.norm();
        v /= v.norm();
        let direct = t.apply(&(&u * v.transpose())).unwrap().norm_squared();
        assert!((t.rank_one_energy(u.as_slice(), v.as_slice()) - direct).abs() < 1e-12);
    }

    #[test]
    fn dimension_formula() {
        assert_eq!(random_tangent(70, 70, 10, 1).dim(), 1300);
        assert_eq!(tangent_dim(5, 4, 0), 0);
        assert_eq!(TangentSpace::full(3, 5).dim(), 15);
    }

    #[test]
    fn mismatched_shapes_error() {
        let t = random_tangent(4, 3, 1, 1);
        assert!(t.apply(&DMatrix::zeros(3, 4)).is_err());
        assert!(TangentSpace::new(Subspace::zero(3), haar_subspace(3, 1, 0).unwrap()).is_err());
    }
}
