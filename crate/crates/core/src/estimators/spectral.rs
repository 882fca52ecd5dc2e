use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::{Subspace, TangentSpace};
use crate::numeric;

use super::{numerical_rank, ObservationSet};

/// Best rank-k approximation of the replicate mean.
pub fn spectral_denoise(obs: &ObservationSet, k: usize) -> Result<DMatrix<f64>> {
    spectral_factors(obs, k, f64::MIN_POSITIVE).map(|(l, _)| l)
}

/// Rank-k truncation of the replicate mean together with its tangent space;
/// directions with σ_i ≤ rank_tol·σ_1 are dropped from both.
pub fn spectral_factors(obs: &ObservationSet, k: usize, rank_tol: f64) -> Result<(DMatrix<f64>, TangentSpace)> {
    let mean = obs
        .replicate_mean()
        .ok_or_else(|| invalid("spectral denoising needs replicate observations"))?;
    let (p1, p2) = obs.dims();
    let kmax = p1.min(p2);
    let k = if k > kmax {
        log::warn!("rank {k} exceeds min(p1, p2) = {kmax}; clamping");
        kmax
    } else {
        k
    };
    if mean.iter().all(|&x| x == 0.0) || k == 0 {
        return Ok((DMatrix::zeros(p1, p2), TangentSpace::zero(p1, p2)));
    }
    let dec = numeric::svd(&mean)?;
    let r = k.min(numerical_rank(&dec.s, rank_tol));
    let u = dec.u.columns(0, r).into_owned();
    let v = dec.v.columns(0, r).into_owned();
    let mut us = u.clone();
    for j in 0..r {
        us.column_mut(j).scale_mut(dec.s[j]);
    }
    let l = us * v.transpose();
    let t = TangentSpace::new(
        Subspace::from_orthonormal_unchecked(u),
        Subspace::from_orthonormal_unchecked(v),
    )?;
    Ok((l, t))
}

/// Top-k eigenvectors of the empirical second-moment matrix of p×1 samples.
pub fn pca_column(obs: &ObservationSet, k: usize) -> Result<Subspace> {
    let reps = obs
        .replicates()
        .ok_or_else(|| invalid("PCA needs replicate observations of p×1 vectors"))?;
    let (p, q) = obs.dims();
    if q != 1 {
        return Err(invalid(format!("PCA samples must be p×1 vectors, got p×{q}")));
    }
    if k > p {
        return Err(invalid(format!("k = {k} exceeds dimension {p}")));
    }
    let mut data = DMatrix::zeros(p, reps.len());
    for (c, r) in reps.iter().enumerate() {
        data.set_column(c, &r.column(0));
    }
    let cov = (&data * data.transpose()) / reps.len() as f64;
    let (_, vecs) = numeric::sym_eigen_desc(&cov);
    Ok(Subspace::from_orthonormal_unchecked(vecs.columns(0, k).into_owned()))
}
