use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{fit, EstimatorConfig, EstimatorKind, Fit, ObservationSet};
use crate::linalg::{Subspace, TangentSpace};
use crate::rng;
use crate::sampling::{complementary_bags, BagPlan};

use super::{
    select_stable_modified, select_stable_with, average_projectors, column_stability, AveragedProjectors, CurveMode,
    SelectionMode, StabilityReport, DEFAULT_ALPHA, DEFAULT_BAGS,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub estimator: EstimatorConfig,
    pub alpha: f64,
    pub bags: usize,
    pub seed: u64,
    pub mode: SelectionMode,
    pub curve: CurveMode,
    /// Scale λ by √(bag size / n) = 1/√2 for the half-size bags instead of
    /// reusing the full-data value.
    pub rescale_lambda: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorConfig::default(),
            alpha: DEFAULT_ALPHA,
            bags: DEFAULT_BAGS,
            seed: 0,
            mode: SelectionMode::Tangent,
            curve: CurveMode::Boundary,
            rescale_lambda: false,
        }
    }
}

/// Per-bag fits from one subsampling plan. `fits[k]` belongs to bag
/// `surviving[k]`; bags whose estimator failed are absent.
#[derive(Clone, Debug)]
pub struct BagEstimates {
    pub plan: BagPlan,
    pub surviving: Vec<usize>,
    pub fits: Vec<Fit>,
}

impl BagEstimates {
    pub fn tangents(&self) -> Result<Vec<TangentSpace>> {
        self.fits.iter().map(Fit::tangent).collect()
    }

    pub fn col_spaces(&self) -> Vec<Subspace> {
        self.fits.iter().map(|f| f.col.clone()).collect()
    }

    /// Complementary pairs whose two halves both survived, as positions in
    /// `fits`.
    pub fn complete_pairs(&self) -> Vec<(usize, usize)> {
        let pos = |bag: usize| self.surviving.iter().position(|&s| s == bag).expect("surviving bag");
        BagPlan::complete_pairs(&self.surviving)
            .into_iter()
            .map(|(a, b)| (pos(a), pos(b)))
            .collect()
    }

    pub fn non_converged(&self) -> usize {
        self.fits.iter().filter(|f| !f.converged).count()
    }
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub report: StabilityReport,
    pub bags: BagEstimates,
    /// Present for the tangent-space modes.
    pub averaged: Option<AveragedProjectors>,
}

pub fn run_pipeline(obs: &ObservationSet, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    run_pipeline_from(obs, cfg, None)
}

/// As [`run_pipeline`], with `warm` (typically the full-data estimate)
/// seeding the iterative estimators on every bag.
pub fn run_pipeline_from(obs: &ObservationSet, cfg: &PipelineConfig, warm: Option<&DMatrix<f64>>) -> Result<PipelineOutput> {
    let bags = estimate_bags(obs, cfg, warm)?;
    let (report, averaged) = select(&bags, cfg.alpha, cfg.mode, cfg.curve)?;
    Ok(PipelineOutput { report, bags, averaged })
}

/// Splits the observations into complementary halves and fits every bag.
/// With an odd number of observations the last one is left out of the plan.
pub fn estimate_bags(obs: &ObservationSet, cfg: &PipelineConfig, warm: Option<&DMatrix<f64>>) -> Result<BagEstimates> {
    cfg.estimator.validate()?;
    let mut n = obs.len();
    if n % 2 == 1 {
        log::warn!("odd number of observations ({n}); the last one is not used for bagging");
        n -= 1;
    }
    let plan = complementary_bags(n, cfg.bags, cfg.seed)?;
    let mut bag_cfg = cfg.estimator.clone();
    if cfg.rescale_lambda {
        bag_cfg.lambda /= std::f64::consts::SQRT_2;
    }
    let warm = match bag_cfg.kind {
        EstimatorKind::Svt => warm,
        _ => None,
    };
    let results: Vec<Result<Fit>> = plan
        .bags
        .par_iter()
        .enumerate()
        .map(|(l, idx)| {
            let sub = obs.subset(idx)?;
            let mut c = bag_cfg.clone();
            c.seed = rng::derive(bag_cfg.seed, l as u64);
            fit(&sub, &c, warm)
        })
        .collect();

    let mut surviving = Vec::with_capacity(plan.b);
    let mut fits = Vec::with_capacity(plan.b);
    let mut last_err = None;
    for (l, r) in results.into_iter().enumerate() {
        match r {
            Ok(f) => {
                surviving.push(l);
                fits.push(f);
            }
            Err(e) if e.is_config() => return Err(e),
            Err(e) => {
                log::warn!("bag {l} dropped: {e}");
                last_err = Some(e);
            }
        }
    }
    if 2 * fits.len() < plan.b {
        return Err(Error::Numerical(format!(
            "only {} of {} bag estimates succeeded (last error: {})",
            fits.len(),
            plan.b,
            last_err.map(|e| e.to_string()).unwrap_or_default()
        )));
    }
    let bags = BagEstimates { plan, surviving, fits };
    let nc = bags.non_converged();
    if nc > 0 {
        log::warn!("{nc} bag estimates stopped at the iteration limit");
    }
    Ok(bags)
}

/// Runs the selection step on existing bag estimates, so one set of fits
/// can serve several α values.
pub fn select(
    bags: &BagEstimates,
    alpha: f64,
    mode: SelectionMode,
    curve: CurveMode,
) -> Result<(StabilityReport, Option<AveragedProjectors>)> {
    match mode {
        SelectionMode::Column => Ok((column_stability(&bags.col_spaces(), alpha)?, None)),
        SelectionMode::Tangent | SelectionMode::TangentModified => {
            let tangents = bags
                .tangents()
                .map_err(|_| invalid("tangent-space selection needs an estimator with row spaces"))?;
            let avg = average_projectors(tangents)?;
            let report = match mode {
                SelectionMode::Tangent => select_stable_with(&avg, alpha, curve)?,
                _ => select_stable_modified(&avg, alpha)?,
            };
            Ok((report, Some(avg)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::discovery_metrics;
    use crate::sampling::{gen_denoise, gen_low_rank};

    #[test]
    fn noiseless_replicates_recover_truth() {
        let truth = gen_low_rank(8, 7, &[3.0, 2.0, 1.0], 4).unwrap();
        let obs = gen_denoise(&truth, 10, 0.0, 0.0, 1).unwrap();
        let cfg = PipelineConfig {
            estimator: EstimatorConfig::spectral(3),
            bags: 10,
            ..Default::default()
        };
        let out = run_pipeline(&obs, &cfg).unwrap();
        assert_eq!(out.report.r_selected, 3);
        let m = discovery_metrics(out.report.selected.tangent().unwrap(), &truth.t_star).unwrap();
        assert!(m.fd.abs() < 1e-8);
        assert_eq!(out.bags.complete_pairs().len(), 5);
    }

    #[test]
    fn deterministic_given_seed() {
        let truth = gen_low_rank(6, 6, &[2.0, 1.0], 2).unwrap();
        let obs = gen_denoise(&truth, 12, 0.3, 1.0, 3).unwrap();
        let cfg = PipelineConfig {
            estimator: EstimatorConfig::spectral(2),
            bags: 8,
            seed: 5,
            ..Default::default()
        };
        let a = run_pipeline(&obs, &cfg).unwrap();
        let b = run_pipeline(&obs, &cfg).unwrap();
        assert_eq!(a.report.sigma_min_curve, b.report.sigma_min_curve);
        assert_eq!(a.averaged.unwrap().avg_col, b.averaged.unwrap().avg_col);
    }

    #[test]
    fn column_mode_needs_no_rows() {
        let truth = gen_low_rank(6, 1, &[3.0], 2).unwrap();
        let obs = gen_denoise(&truth, 20, 0.1, 0.0, 3).unwrap();
        let cfg = PipelineConfig {
            estimator: EstimatorConfig::pca_column(1),
            bags: 4,
            mode: SelectionMode::Column,
            ..Default::default()
        };
        let out = run_pipeline(&obs, &cfg).unwrap();
        assert_eq!(out.report.r_selected, 1);
        let tangent_cfg = PipelineConfig {
            mode: SelectionMode::Tangent,
            ..cfg
        };
        assert!(run_pipeline(&obs, &tangent_cfg).is_err());
    }
}
