use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};
use crate::linalg::{haar_orthogonal, Subspace, TangentSpace};
use crate::numeric;
use crate::rng;

/// Low-rank ground truth with full orthogonal frames, so that complement
/// directions U⋆_{:,r+i}, V⋆_{:,r+j} are available for basis-dependent bounds.
#[derive(Clone, Debug)]
pub struct SyntheticTruth {
    pub l_star: DMatrix<f64>,
    pub t_star: TangentSpace,
    pub spectrum: Vec<f64>,
    pub seed: u64,
    /// p1×p1 orthogonal; the first r columns span C⋆.
    pub u_full: DMatrix<f64>,
    /// p2×p2 orthogonal; the first r columns span R⋆.
    pub v_full: DMatrix<f64>,
}

impl SyntheticTruth {
    pub fn dims(&self) -> (usize, usize) {
        self.l_star.shape()
    }

    pub fn rank(&self) -> usize {
        self.spectrum.len()
    }

    pub fn col_complement(&self) -> DMatrix<f64> {
        let r = self.rank();
        self.u_full.columns(r, self.u_full.ncols() - r).into_owned()
    }

    pub fn row_complement(&self) -> DMatrix<f64> {
        let r = self.rank();
        self.v_full.columns(r, self.v_full.ncols() - r).into_owned()
    }

    /// Rebuilds from stored orthogonal frames and spectrum; L⋆ is recomputed
    /// exactly as at generation time.
    pub fn from_frames(u_full: DMatrix<f64>, v_full: DMatrix<f64>, spectrum: &[f64], seed: u64) -> Result<Self> {
        for f in [&u_full, &v_full] {
            let n = f.nrows();
            if f.ncols() != n || (f.tr_mul(f) - DMatrix::<f64>::identity(n, n)).amax() > 1e-8 {
                return Err(invalid("truth frames must be square orthogonal matrices"));
            }
        }
        check_spectrum(u_full.nrows(), v_full.nrows(), spectrum)?;
        assemble(u_full, v_full, spectrum, seed)
    }

    /// Rebuilds the frames from a stored matrix, e.g. a truth sidecar. With
    /// `rank` given the SVD is truncated there, otherwise at `rank_tol`.
    pub fn from_matrix(l_star: DMatrix<f64>, rank: Option<usize>, rank_tol: f64, seed: u64) -> Result<Self> {
        let dec = numeric::svd(&l_star)?;
        let r = match rank {
            Some(r) if r <= dec.s.len() => r,
            Some(r) => return Err(invalid(format!("rank {r} exceeds matrix dimensions"))),
            None => crate::estimators::numerical_rank(&dec.s, rank_tol),
        };
        let col = Subspace::from_orthonormal_unchecked(dec.u.columns(0, r).into_owned());
        let row = Subspace::from_orthonormal_unchecked(dec.v.columns(0, r).into_owned());
        let u_full = col.completed_frame();
        let v_full = row.completed_frame();
        Ok(Self {
            t_star: TangentSpace::new(col, row)?,
            spectrum: dec.s[..r].to_vec(),
            seed,
            u_full,
            v_full,
            l_star,
        })
    }
}

fn check_spectrum(p1: usize, p2: usize, spectrum: &[f64]) -> Result<()> {
    if spectrum.len() > p1.min(p2) {
        return Err(invalid(format!("rank {} exceeds min({p1}, {p2})", spectrum.len())));
    }
    if spectrum.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(invalid("singular values must be positive and finite"));
    }
    if spectrum.windows(2).any(|w| w[1] > w[0]) {
        return Err(invalid("singular values must be in non-increasing order"));
    }
    Ok(())
}

fn assemble(u_full: DMatrix<f64>, v_full: DMatrix<f64>, spectrum: &[f64], seed: u64) -> Result<SyntheticTruth> {
    let r = spectrum.len();
    let u = u_full.columns(0, r).into_owned();
    let v = v_full.columns(0, r).into_owned();
    let l_star = &u * DMatrix::from_diagonal(&DVector::from_column_slice(spectrum)) * v.transpose();
    Ok(SyntheticTruth {
        l_star,
        t_star: TangentSpace::new(
            Subspace::from_orthonormal_unchecked(u),
            Subspace::from_orthonormal_unchecked(v),
        )?,
        spectrum: spectrum.to_vec(),
        seed,
        u_full,
        v_full,
    })
}

/// L⋆ = U diag(spectrum) Vᵀ with Haar U, V.
pub fn gen_low_rank(p1: usize, p2: usize, spectrum: &[f64], seed: u64) -> Result<SyntheticTruth> {
    check_spectrum(p1, p2, spectrum)?;
    let mut g = rng::seeded(seed);
    let u_full = haar_orthogonal(&mut g, p1);
    let v_full = haar_orthogonal(&mut g, p2);
    assemble(u_full, v_full, spectrum, seed)
}

/// max_i ‖P_S e_i‖², the largest squared row norm of an orthonormal basis.
pub fn incoherence(s: &Subspace) -> f64 {
    let b = s.basis();
    (0..b.nrows()).map(|i| b.row(i).norm_squared()).fold(0.0, f64::max)
}

/// Truth whose column and row spaces both have incoherence `coherence`.
///
/// Rejection sampling from Haar frames essentially never reaches large
/// values such as 0.8 at moderate size, so the leading singular vectors are
/// built directly: u₁ = √μ e_i + √(1−μ) g with g a random unit vector
/// orthogonal to e_i, and the remaining columns are Haar inside the
/// complement of span{e_i, u₁}. Then ‖P_U e_i‖² = μ exactly; other
/// coordinates stay near r/p, so the maximum is μ whenever μ exceeds them.
pub fn gen_low_rank_coherent(
    p1: usize,
    p2: usize,
    spectrum: &[f64],
    coherence: f64,
    seed: u64,
) -> Result<SyntheticTruth> {
    check_spectrum(p1, p2, spectrum)?;
    if spectrum.is_empty() {
        return Err(invalid("coherent truth needs rank ≥ 1"));
    }
    if !(coherence > 0.0 && coherence <= 1.0) {
        return Err(invalid("coherence must lie in (0, 1]"));
    }
    let mut g = rng::seeded(seed);
    let u_full = coherent_frame(&mut g, p1, spectrum.len(), coherence)?;
    let v_full = coherent_frame(&mut g, p2, spectrum.len(), coherence)?;
    assemble(u_full, v_full, spectrum, seed)
}

fn coherent_frame(g: &mut rng::Rng, p: usize, r: usize, mu: f64) -> Result<DMatrix<f64>> {
    if p < 2 {
        return Err(invalid("coherent construction needs dimension ≥ 2"));
    }
    let i = rand::Rng::gen_range(g, 0..p);
    let mut e = DVector::zeros(p);
    e[i] = 1.0;
    let mut w = DVector::from_column_slice(rng::gaussian_matrix(g, p, 1).as_slice());
    w[i] = 0.0;
    w /= w.norm();
    let u1 = &e * mu.sqrt() + &w * (1.0 - mu).sqrt();
    // Orthonormal basis of span{e, w}ᗮ, then Haar directions inside it.
    let pair = Subspace::from_orthonormal_unchecked(DMatrix::from_columns(&[e.clone(), w.clone()]));
    let rest = pair.complement();
    let inner = haar_orthogonal(g, p - 2);
    let rest_rot = rest.basis() * inner;
    // The direction of span{e, w} orthogonal to u₁ goes last so that the
    // leading r columns avoid e_i apart from u₁.
    let u1_perp = &e * (1.0 - mu).sqrt() - &w * mu.sqrt();
    let mut frame = DMatrix::zeros(p, p);
    frame.set_column(0, &u1);
    let take = (r - 1).min(p - 2);
    for k in 0..take {
        frame.set_column(1 + k, &rest_rot.column(k));
    }
    let mut col = 1 + take;
    for k in take..p - 2 {
        frame.set_column(col, &rest_rot.column(k));
        col += 1;
    }
    frame.set_column(col, &u1_perp);
    Ok(frame)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_one_unit_norm() {
        let t = gen_low_rank(6, 5, &[1.0], 3).unwrap();
        assert!((t.l_star.norm() - 1.0).abs() < 1e-12);
        assert_eq!(t.t_star.rank(), 1);
    }

    #[test]
    fn stylized_spectrum_energy() {
        let spectrum = [1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.5, 0.5, 0.1, 0.1];
        let t = gen_low_rank(70, 70, &spectrum, 1).unwrap();
        assert!((t.l_star.norm_squared() - 4.27).abs() < 1e-10);
        let est = crate::estimators::extract_tangent(&t.l_star, 1e-8).unwrap();
        assert_eq!(est.dim(), 1300);
        let ov = crate::metrics::tangent_overlap(&est, &t.t_star).unwrap();
        assert!((ov - 1300.0).abs() < 1e-6);
    }

    #[test]
    fn bad_spectra_rejected() {
        assert!(gen_low_rank(3, 3, &[1.0, 2.0], 0).is_err());
        assert!(gen_low_rank(3, 3, &[1.0, 0.0], 0).is_err());
        assert!(gen_low_rank(2, 3, &[1.0, 1.0, 1.0], 0).is_err());
    }

    #[test]
    fn frames_are_orthogonal() {
        let t = gen_low_rank(7, 4, &[2.0, 1.0], 9).unwrap();
        assert!((t.u_full.tr_mul(&t.u_full) - DMatrix::<f64>::identity(7, 7)).amax() < 1e-12);
        assert!((t.v_full.tr_mul(&t.v_full) - DMatrix::<f64>::identity(4, 4)).amax() < 1e-12);
        assert_eq!(t.col_complement().ncols(), 5);
    }

    #[test]
    fn coherent_truth_hits_target() {
        let spectrum = vec![1.0; 10];
        let t = gen_low_rank_coherent(70, 70, &spectrum, 0.8, 4).unwrap();
        assert!((incoherence(t.t_star.col()) - 0.8).abs() < 1e-10);
        assert!((incoherence(t.t_star.row()) - 0.8).abs() < 1e-10);
        assert!((t.u_full.tr_mul(&t.u_full) - DMatrix::<f64>::identity(70, 70)).amax() < 1e-10);
    }

    #[test]
    fn from_matrix_roundtrip() {
        let t = gen_low_rank(6, 5, &[3.0, 1.0], 2).unwrap();
        let back = SyntheticTruth::from_matrix(t.l_star.clone(), None, 1e-8, 2).unwrap();
        assert_eq!(back.rank(), 2);
        assert!((back.spectrum[0] - 3.0).abs() < 1e-12);
        let ov = crate::metrics::tangent_overlap(&back.t_star, &t.t_star).unwrap();
        assert!((ov - t.t_star.dim() as f64).abs() < 1e-9);
    }
}
