//! Nuclear-norm completion: min_L Σ_{(i,j)∈S} (L − Y)²_ij + λ‖L‖_*.
//!
//! Proximal gradient with step 1/2 (the sampled loss has a 2-Lipschitz
//! gradient). With that step the gradient step simply overwrites the sampled
//! entries with the data, and the prox is soft-thresholding of the singular
//! values at λ/2.

use nalgebra::DMatrix;

use crate::error::{invalid, mismatch, Result};
use crate::linalg::{Subspace, TangentSpace};
use crate::numeric;

use super::{numerical_rank, EstimatorConfig, ObservationSet};

#[derive(Clone, Debug)]
pub struct SvtResult {
    pub estimate: DMatrix<f64>,
    pub iterations: usize,
    /// False when max_iters was reached first; the last iterate is returned.
    pub converged: bool,
    /// Objective after each iteration (index 0 is the starting point).
    pub objective: Vec<f64>,
    u: DMatrix<f64>,
    s: Vec<f64>,
    v: DMatrix<f64>,
}

impl SvtResult {
    /// Tangent space of the estimate, read off the final thresholded SVD.
    pub fn tangent(&self, rank_tol: f64) -> TangentSpace {
        let r = numerical_rank(&self.s, rank_tol);
        TangentSpace::new(
            Subspace::from_orthonormal_unchecked(self.u.columns(0, r).into_owned()),
            Subspace::from_orthonormal_unchecked(self.v.columns(0, r).into_owned()),
        )
        .expect("equal ranks")
    }

    /// Nonzero singular values of the estimate, descending.
    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }
}

pub fn svt_complete(obs: &ObservationSet, cfg: &EstimatorConfig) -> Result<SvtResult> {
    svt_complete_from(obs, cfg, None)
}

/// Smallest λ for which the first iterate from zero is already zero.
pub fn svt_lambda_max(obs: &ObservationSet) -> Result<f64> {
    let m = obs
        .sampled_matrix()
        .ok_or_else(|| invalid("nuclear-norm completion needs entrywise observations"))?;
    Ok(2.0 * numeric::spectral_norm(&m))
}

pub fn svt_complete_from(
    obs: &ObservationSet,
    cfg: &EstimatorConfig,
    init: Option<&DMatrix<f64>>,
) -> Result<SvtResult> {
    let entries = obs
        .entries()
        .ok_or_else(|| invalid("nuclear-norm completion needs entrywise observations"))?;
    if entries.is_empty() {
        return Err(invalid("no observations"));
    }
    if !(cfg.lambda > 0.0) || !cfg.lambda.is_finite() {
        return Err(invalid("nuclear-norm penalty must be positive and finite"));
    }
    if cfg.max_iters < 1 || !(cfg.conv_tol > 0.0) {
        return Err(invalid("max_iters ≥ 1 and conv_tol > 0 required"));
    }
    let (p1, p2) = obs.dims();
    let tau = cfg.lambda / 2.0;

    let mut l = match init {
        Some(m) if m.shape() != (p1, p2) => {
            return Err(mismatch(format!("warm start {:?} for {p1}×{p2} problem", m.shape())))
        }
        Some(m) => m.clone(),
        None => DMatrix::zeros(p1, p2),
    };
    let start_nuclear: f64 = numeric::singular_values(&l).iter().sum();
    let mut f_prev = sampled_loss(&l, entries) + cfg.lambda * start_nuclear;
    let mut objective = vec![f_prev];
    let mut u = DMatrix::zeros(p1, 0);
    let mut v = DMatrix::zeros(p2, 0);
    let mut s = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=cfg.max_iters {
        iterations = it;
        let mut z = l;
        for e in entries {
            z[(e.i, e.j)] = e.y;
        }
        let dec = numeric::svd(&z)?;
        let keep = dec.s.iter().take_while(|&&x| x > tau).count();
        s = dec.s[..keep].iter().map(|x| x - tau).collect();
        u = dec.u.columns(0, keep).into_owned();
        v = dec.v.columns(0, keep).into_owned();
        l = low_rank_product(&u, &s, &v, p1, p2);

        let f = sampled_loss(&l, entries) + cfg.lambda * s.iter().sum::<f64>();
        objective.push(f);
        let change = (f_prev - f).abs();
        f_prev = f;
        if change <= cfg.conv_tol * f.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("nuclear-norm completion stopped at max_iters = {} before converging", cfg.max_iters);
    }
    Ok(SvtResult {
        estimate: l,
        iterations,
        converged,
        objective,
        u,
        s,
        v,
    })
}

fn sampled_loss(l: &DMatrix<f64>, entries: &[super::Entry]) -> f64 {
    numeric::compensated_sum(entries.iter().map(|e| {
        let d = l[(e.i, e.j)] - e.y;
        d * d
    }))
}

fn low_rank_product(u: &DMatrix<f64>, s: &[f64], v: &DMatrix<f64>, p1: usize, p2: usize) -> DMatrix<f64> {
    if s.is_empty() {
        return DMatrix::zeros(p1, p2);
    }
    let mut us = u.clone();
    for (j, &sj) in s.iter().enumerate() {
        us.column_mut(j).scale_mut(sj);
    }
    us * v.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Entry;
    use crate::rng;

    fn full_obs(y: &DMatrix<f64>) -> ObservationSet {
        let mut entries = Vec::new();
        for j in 0..y.ncols() {
            for i in 0..y.nrows() {
                entries.push(Entry { i, j, y: y[(i, j)] });
            }
        }
        ObservationSet::entrywise(y.nrows(), y.ncols(), entries).unwrap()
    }

    #[test]
    fn huge_penalty_gives_zero() {
        let y = rng::gaussian_matrix(&mut rng::seeded(1), 5, 4);
        let obs = full_obs(&y);
        let lmax = svt_lambda_max(&obs).unwrap();
        let res = svt_complete(&obs, &EstimatorConfig::svt(lmax * 1.01)).unwrap();
        assert_eq!(res.estimate.amax(), 0.0);
        assert_eq!(res.tangent(1e-8).rank(), 0);
    }

    #[test]
    fn fully_observed_is_soft_threshold() {
        let mut g = rng::seeded(2);
        let y = rng::gaussian_matrix(&mut g, 6, 1) * rng::gaussian_matrix(&mut g, 1, 5);
        let lambda = 0.2;
        let res = svt_complete(&full_obs(&y), &EstimatorConfig::svt(lambda)).unwrap();
        let dec = numeric::svd(&y).unwrap();
        let shrunk: Vec<f64> = dec.s.iter().map(|s| (s - lambda / 2.0).max(0.0)).collect();
        let expect = low_rank_product(&dec.u, &shrunk, &dec.v, 6, 5);
        assert!((res.estimate - expect).norm() < 1e-3);
        assert!(res.converged);
    }

    #[test]
    fn objective_never_increases() {
        let mut g = rng::seeded(3);
        let truth = rng::gaussian_matrix(&mut g, 12, 2) * rng::gaussian_matrix(&mut g, 2, 10);
        let mut entries = Vec::new();
        for j in 0..10 {
            for i in 0..12 {
                if (i * 7 + j * 3) % 3 != 0 {
                    entries.push(Entry { i, j, y: truth[(i, j)] + 0.1 * rng::gaussian(&mut g) });
                }
            }
        }
        let obs = ObservationSet::entrywise(12, 10, entries).unwrap();
        let res = svt_complete(&obs, &EstimatorConfig::svt(0.5)).unwrap();
        for w in res.objective.windows(2) {
            assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
        }
    }

    #[test]
    fn rejects_wrong_model_and_penalty() {
        let obs = ObservationSet::replicate(vec![DMatrix::zeros(2, 2)]).unwrap();
        assert!(svt_complete(&obs, &EstimatorConfig::svt(1.0)).is_err());
        let y = DMatrix::from_element(2, 2, 1.0);
        assert!(svt_complete(&full_obs(&y), &EstimatorConfig::svt(0.0)).is_err());
    }

    #[test]
    fn stalls_flagged_without_error() {
        let y = rng::gaussian_matrix(&mut rng::seeded(5), 6, 6);
        let mut entries = Vec::new();
        for i in 0..6 {
            entries.push(Entry { i, j: i, y: y[(i, i)] });
        }
        let obs = ObservationSet::entrywise(6, 6, entries).unwrap();
        let cfg = EstimatorConfig {
            max_iters: 1,
            conv_tol: 1e-15,
            ..EstimatorConfig::svt(0.01)
        };
        let res = svt_complete(&obs, &cfg).unwrap();
        assert!(!res.converged);
        assert_eq!(res.iterations, 1);
    }
}
