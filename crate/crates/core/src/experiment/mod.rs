//! Reproducible simulation studies: each preset fixes a design (truth,
//! noise levels, estimator, subsampling) and runs independent trials that
//! compare the base estimator against its stable tangent space.

mod config;
mod report;
mod studies;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io;
use crate::rng;

pub use config::{CvSettings, ExperimentConfig, LinearArm, Preset, CONFIG_SCHEMA};
pub use report::{
    BoundRow, BoundSummary, CurvePoint, CurveRow, ExperimentSummary, MethodSummary, ResultRow, SettingInfo,
    SettingSummary, Stat, TrialOutput, REPORT_SCHEMA,
};

use report::{summarize, Sinks};

/// Tag under which the ground truth seed is derived from the master seed.
const TRUTH_TAG: u64 = 0;

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    pub rows: Vec<ResultRow>,
    pub bounds: Vec<BoundRow>,
    pub curves: Vec<CurveRow>,
}

/// Runs every trial of `cfg`. When `cfg.output_dir` is set, results.csv
/// (plus bounds.csv / curves.csv where the study has them) grows one trial
/// at a time and summary.json is written at the end.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let truth_seed = rng::derive(cfg.seed, TRUTH_TAG);
    let study = studies::build(cfg, truth_seed)?;
    log::info!(
        "{}: {} settings × {} methods × {} trials",
        cfg.experiment,
        study.settings().len(),
        study.methods().len(),
        cfg.trials
    );
    let mut sinks = match &cfg.output_dir {
        Some(dir) => Some(Sinks::create(dir, study.has_bounds(), study.has_curves())?),
        None => None,
    };

    let chunk = rayon::current_num_threads().max(1);
    let mut outputs = Vec::with_capacity(cfg.trials);
    for start in (0..cfg.trials).step_by(chunk) {
        let end = (start + chunk).min(cfg.trials);
        let batch: Vec<Result<TrialOutput>> = (start..end).into_par_iter().map(|t| study.trial(t)).collect();
        for (t, res) in (start..end).zip(batch) {
            let out = res.map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("trial {t}: {m}")),
                e => e,
            })?;
            if let Some(s) = &mut sinks {
                s.write(&out)?;
            }
            log::info!("trial {}/{} done", t + 1, cfg.trials);
            outputs.push(out);
        }
    }

    let expected = cfg.trials * study.settings().len() * study.methods().len();
    let got: usize = outputs.iter().map(|o| o.rows.len()).sum();
    if got != expected {
        return Err(Error::Numerical(format!("expected {expected} result rows, produced {got}")));
    }
    let summary = summarize(cfg, truth_seed, study.settings(), study.methods(), &outputs);
    if let Some(dir) = &cfg.output_dir {
        io::write_json(&dir.join("summary.json"), &summary)?;
    }
    let mut rows = Vec::with_capacity(got);
    let mut bounds = Vec::new();
    let mut curves = Vec::new();
    for o in outputs {
        rows.extend(o.rows);
        bounds.extend(o.bounds);
        curves.extend(o.curves);
    }
    Ok(ExperimentOutput {
        summary,
        rows,
        bounds,
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(p: Preset) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(p);
        cfg.trials = 2;
        cfg.bags = 6;
        cfg
    }

    #[test]
    fn fig_kappa_small_has_curves_and_rows() {
        let mut cfg = small(Preset::FigKappa);
        cfg.p1 = 20;
        cfg.p2 = 20;
        cfg.observations = 300;
        cfg.snr = vec![2.0];
        cfg.lambda_points = 2;
        cfg.curve_max_rank = 4;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2 * 2 * 2);
        assert!(!out.curves.is_empty());
        assert_eq!(out.summary.settings.len(), 2);
        assert!(out.summary.settings.iter().all(|s| s.sigma_min_curve.len() == 5));
    }

    #[test]
    fn summary_is_deterministic_and_files_written() {
        let mut cfg = small(Preset::Table2);
        cfg.p1 = 20;
        cfg.p2 = 20;
        cfg.spectrum = vec![1.0, 0.5];
        cfg.observations = 300;
        cfg.pinned_ranks = vec![1, 2];
        cfg.lambdas = vec![0.5];
        let dir = tempfile::tempdir().unwrap();
        cfg.output_dir = Some(dir.path().join("a"));
        let a = run_experiment(&cfg).unwrap();
        cfg.output_dir = Some(dir.path().join("b"));
        let b = run_experiment(&cfg).unwrap();
        let ja = std::fs::read(dir.path().join("a/summary.json")).unwrap();
        let jb = std::fs::read(dir.path().join("b/summary.json")).unwrap();
        assert_eq!(ja, jb);
        assert_eq!(a.rows, b.rows);
        let csv = std::fs::read_to_string(dir.path().join("a/results.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    }

    #[test]
    fn als_and_denoise_small() {
        let mut cfg = small(Preset::AlphaSweep);
        cfg.p1 = 15;
        cfg.p2 = 15;
        cfg.observations = 150;
        cfg.holdout = 40;
        cfg.truth_ranks = vec![1];
        cfg.snr = vec![2.0];
        cfg.alpha = vec![0.6, 0.8];
        cfg.estimator.k = 3;
        cfg.cv.points = 3;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2 * 2);

        let mut cfg = small(Preset::DenoiseBounds);
        cfg.p1 = 20;
        cfg.p2 = 20;
        cfg.spectrum = vec![12.0, 10.0];
        cfg.observations = 40;
        cfg.gammas = vec![10.0];
        cfg.estimator_ranks = vec![2];
        cfg.alpha = vec![0.8, 0.9];
        cfg.mc_reps = 4;
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.rows.len(), 2 * 2 * 2);
        assert_eq!(out.bounds.len(), 2 * 2);
        assert!(out.summary.settings[0].bounds.is_some());
    }
}
