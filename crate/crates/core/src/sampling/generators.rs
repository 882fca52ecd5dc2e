use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::estimators::{Entry, LinearObservation, ObservationSet};
use crate::rng;

use super::SyntheticTruth;

/// m entries sampled uniformly without replacement, plus N(0, σ²) noise.
pub fn gen_completion(truth: &SyntheticTruth, m: usize, sigma: f64, seed: u64) -> Result<ObservationSet> {
    let (p1, p2) = truth.dims();
    if m > p1 * p2 {
        return Err(invalid(format!("cannot sample {m} distinct entries of a {p1}×{p2} matrix")));
    }
    if m == 0 {
        return Err(invalid("need at least one observation"));
    }
    if !(sigma >= 0.0) {
        return Err(invalid("noise level must be non-negative"));
    }
    let mut g = rng::seeded(seed);
    // Fisher–Yates prefix over column-major linear indices.
    let mut cells: Vec<usize> = (0..p1 * p2).collect();
    for k in 0..m {
        let j = rand::Rng::gen_range(&mut g, k..cells.len());
        cells.swap(k, j);
    }
    let entries = cells[..m]
        .iter()
        .map(|&c| {
            let (i, j) = (c % p1, c / p1);
            let noise = if sigma > 0.0 { sigma * rng::gaussian(&mut g) } else { 0.0 };
            Entry {
                i,
                j,
                y: truth.l_star[(i, j)] + noise,
            }
        })
        .collect();
    ObservationSet::entrywise(p1, p2, entries)
}

/// Y_i = L⋆ + δ[γ U⋆ D_i V⋆ᵀ + ε_i] with D_i diagonal standard normal on all
/// min(p1, p2) paired singular directions and ε_i dense standard normal.
/// Replicate i draws from stream i of `seed`.
pub fn gen_denoise(truth: &SyntheticTruth, n: usize, delta: f64, gamma: f64, seed: u64) -> Result<ObservationSet> {
    check_denoise(n, delta, gamma)?;
    let reps = (0..n)
        .map(|i| {
            let mut g = rng::stream(seed, i as u64);
            Arc::new(denoise_draw(truth, delta, gamma, 1.0, &mut g))
        })
        .collect();
    ObservationSet::replicate_shared(reps)
}

/// One matrix distributed as the mean of n replicates from `gen_denoise`
/// (the Gaussian parts average to variance 1/n). Used where only the mean
/// matters, e.g. Monte-Carlo over whole datasets.
pub fn gen_denoise_mean(truth: &SyntheticTruth, n: usize, delta: f64, gamma: f64, seed: u64) -> Result<DMatrix<f64>> {
    check_denoise(n, delta, gamma)?;
    let mut g = rng::seeded(seed);
    Ok(denoise_draw(truth, delta, gamma, 1.0 / (n as f64).sqrt(), &mut g))
}

fn check_denoise(n: usize, delta: f64, gamma: f64) -> Result<()> {
    if n == 0 {
        return Err(invalid("need at least one replicate"));
    }
    if !(delta >= 0.0) || !(gamma >= 0.0) {
        return Err(invalid("delta and gamma must be non-negative"));
    }
    Ok(())
}

fn denoise_draw(truth: &SyntheticTruth, delta: f64, gamma: f64, sd: f64, g: &mut rng::Rng) -> DMatrix<f64> {
    let (p1, p2) = truth.dims();
    let m = p1.min(p2);
    let d: Vec<f64> = (0..m).map(|_| sd * rng::gaussian(g)).collect();
    let eps = rng::gaussian_matrix(g, p1, p2) * sd;
    if delta == 0.0 {
        return truth.l_star.clone();
    }
    let mut ud = truth.u_full.columns(0, m).into_owned();
    for (k, dk) in d.iter().enumerate() {
        ud.column_mut(k).scale_mut(gamma * dk);
    }
    let aligned = ud * truth.v_full.columns(0, m).transpose();
    &truth.l_star + (aligned + eps) * delta
}

/// y = ⟨A, L⋆⟩ + ε with standard Gaussian A and ε ~ N(0, σ²).
pub fn gen_linear(truth: &SyntheticTruth, n: usize, sigma: f64, seed: u64) -> Result<ObservationSet> {
    if n == 0 {
        return Err(invalid("need at least one observation"));
    }
    if !(sigma >= 0.0) {
        return Err(invalid("noise level must be non-negative"));
    }
    let (p1, p2) = truth.dims();
    let mut g = rng::seeded(seed);
    let obs = (0..n)
        .map(|_| {
            let a = rng::gaussian_matrix(&mut g, p1, p2);
            let y = a.dot(&truth.l_star) + sigma * rng::gaussian(&mut g);
            LinearObservation { a: Arc::new(a), y }
        })
        .collect();
    ObservationSet::linear(p1, p2, obs)
}
