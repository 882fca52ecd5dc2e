//! Penalty selection by K-fold cross-validation or a single holdout split.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng;

use super::{als_complete, svt_complete_from, EstimatorConfig, ObservationSet, Observations};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvResult {
    /// Descending penalty grid.
    pub lambdas: Vec<f64>,
    /// Mean held-out squared error per grid point.
    pub mse: Vec<f64>,
    pub best_index: usize,
    pub best_lambda: f64,
}

/// `points` log-spaced values from `max` down to `max · ratio`.
pub fn lambda_grid(max: f64, points: usize, ratio: f64) -> Result<Vec<f64>> {
    if !(max > 0.0) || points == 0 || !(ratio > 0.0 && ratio <= 1.0) {
        return Err(invalid("grid needs max > 0, points ≥ 1 and ratio in (0, 1]"));
    }
    if points == 1 {
        return Ok(vec![max]);
    }
    let step = ratio.ln() / (points - 1) as f64;
    Ok((0..points).map(|i| max * (step * i as f64).exp()).collect())
}

/// Mean squared prediction error of `estimate` on held-out observations.
pub fn holdout_mse(estimate: &DMatrix<f64>, test: &ObservationSet) -> f64 {
    let n = test.len() as f64;
    let sq = match test.data() {
        Observations::Entrywise(es) => crate::numeric::compensated_sum(es.iter().map(|e| {
            let d = estimate[(e.i, e.j)] - e.y;
            d * d
        })),
        Observations::Linear(fs) => crate::numeric::compensated_sum(fs.iter().map(|f| {
            let d = f.a.dot(estimate) - f.y;
            d * d
        })),
        Observations::Replicate(rs) => {
            crate::numeric::compensated_sum(rs.iter().map(|r| (estimate - r.as_ref()).norm_squared()))
                / (estimate.len() as f64)
        }
    };
    sq / n
}

/// K-fold CV of nuclear-norm completion over a descending grid. Each fold
/// walks the grid from large to small penalties with warm starts.
pub fn cross_validate_svt(
    obs: &ObservationSet,
    base: &EstimatorConfig,
    grid: &[f64],
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    if folds < 2 || folds > obs.len() {
        return Err(invalid(format!("cannot make {folds} folds from {} observations", obs.len())));
    }
    if grid.is_empty() {
        return Err(invalid("empty penalty grid"));
    }
    let mut order: Vec<usize> = (0..obs.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut sums = vec![0.0; grid.len()];
    for f in 0..folds {
        let (test_idx, train_idx): (Vec<usize>, Vec<usize>) = {
            let mut test = Vec::new();
            let mut train = Vec::new();
            for (pos, &i) in order.iter().enumerate() {
                if pos % folds == f {
                    test.push(i);
                } else {
                    train.push(i);
                }
            }
            (test, train)
        };
        let train = obs.subset(&train_idx)?;
        let test = obs.subset(&test_idx)?;
        let mut warm: Option<DMatrix<f64>> = None;
        for (g, &lambda) in grid.iter().enumerate() {
            let cfg = EstimatorConfig {
                lambda,
                ..base.clone()
            };
            let res = svt_complete_from(&train, &cfg, warm.as_ref())?;
            sums[g] += holdout_mse(&res.estimate, &test);
            warm = Some(res.estimate);
        }
    }
    let mse: Vec<f64> = sums.iter().map(|s| s / folds as f64).collect();
    Ok(finish(grid, mse))
}

/// Ridge penalty above which the ALS objective is minimized at zero:
/// ‖Σ yᵢ Aᵢ‖₂, the spectral norm of the adjoint applied to the responses.
pub fn als_lambda_max(obs: &ObservationSet) -> Result<f64> {
    let (p1, p2) = obs.dims();
    let adj = match obs.data() {
        Observations::Entrywise(_) => obs.sampled_matrix().expect("entrywise"),
        Observations::Linear(fs) => {
            let mut m = DMatrix::zeros(p1, p2);
            for f in fs {
                m += f.a.as_ref() * f.y;
            }
            m
        }
        Observations::Replicate(_) => return Err(invalid("ALS penalty grid needs entrywise or linear observations")),
    };
    let s = crate::numeric::spectral_norm(&adj);
    if !(s > 0.0) {
        return Err(invalid("all responses are zero"));
    }
    Ok(s)
}

/// Holdout selection of the ALS ridge penalty.
pub fn select_als_lambda(
    train: &ObservationSet,
    valid: &ObservationSet,
    base: &EstimatorConfig,
    grid: &[f64],
) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(invalid("empty penalty grid"));
    }
    let mut mse = Vec::with_capacity(grid.len());
    for &lambda in grid {
        let cfg = EstimatorConfig {
            lambda,
            ..base.clone()
        };
        let res = als_complete(train, &cfg)?;
        mse.push(holdout_mse(&(&res.u * res.v.transpose()), valid));
    }
    Ok(finish(grid, mse))
}

fn finish(grid: &[f64], mse: Vec<f64>) -> CvResult {
    // First minimum wins, i.e. the largest penalty among ties.
    let mut best = 0;
    for (i, &m) in mse.iter().enumerate() {
        if m < mse[best] {
            best = i;
        }
    }
    CvResult {
        lambdas: grid.to_vec(),
        mse,
        best_index: best,
        best_lambda: grid[best],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Entry;

    #[test]
    fn grid_is_log_spaced() {
        let g = lambda_grid(10.0, 3, 0.01).unwrap();
        assert!((g[0] - 10.0).abs() < 1e-12 && (g[1] - 1.0).abs() < 1e-12 && (g[2] - 0.1).abs() < 1e-12);
        assert!(lambda_grid(0.0, 3, 0.1).is_err());
    }

    #[test]
    fn cv_prefers_signal_over_full_shrinkage() {
        let mut g = rng::seeded(1);
        let truth = rng::gaussian_matrix(&mut g, 15, 2) * rng::gaussian_matrix(&mut g, 2, 15);
        let mut entries = Vec::new();
        for i in 0..15 {
            for j in 0..15 {
                if (i * 3 + j * 5) % 4 != 0 {
                    entries.push(Entry { i, j, y: truth[(i, j)] + 0.1 * rng::gaussian(&mut g) });
                }
            }
        }
        let obs = ObservationSet::entrywise(15, 15, entries).unwrap();
        let lmax = super::super::svt_lambda_max(&obs).unwrap();
        let grid = lambda_grid(lmax, 8, 1e-3).unwrap();
        let cv = cross_validate_svt(&obs, &EstimatorConfig::svt(1.0), &grid, 5, 3).unwrap();
        assert!(cv.best_index > 0);
        assert!(cv.mse[cv.best_index] < cv.mse[0]);
    }
}
