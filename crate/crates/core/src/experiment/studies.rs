use std::collections::BTreeMap;

use crate::bounds::{bound_report, f_term, BoundMode, DataModel, FBasis, FTerm};
use crate::error::Result;
use crate::estimators::{
    als_lambda_max, cross_validate_svt, fit, holdout_mse, lambda_grid, refit, select_als_lambda, svt_lambda_max,
    truncated_tangent, EstimatorConfig, ObservationSet,
};
use crate::linalg::TangentSpace;
use crate::metrics::discovery_metrics;
use crate::rng::derive;
use crate::sampling::{
    calibrate_snr, gen_completion, gen_denoise, gen_linear, gen_low_rank, gen_low_rank_coherent, SnrModel, SyntheticTruth,
};
use crate::stability::{
    select_stable_with, average_projectors, estimate_bags, rank_pinned, select, sigma_min_curve, CurveMode, PipelineConfig,
};

use super::report::{BoundRow, CurveRow, ResultRow, SettingInfo, TrialOutput};
use super::{ExperimentConfig, Preset};

/// Monte-Carlo draws used to calibrate each noise level.
const CALIBRATION_REPS: usize = 200;

// Seed tags for the stages of one group of settings.
const PILOT: u64 = 0xB1_0000;
const CALIBRATE: u64 = 0xB2_0000;
const CV: u64 = 0xB3_0000;
const FTERM: u64 = 0xB4_0000;
const GROUP: u64 = 0xB5_0000;

pub(crate) trait Study: Sync {
    fn settings(&self) -> &[SettingInfo];
    fn methods(&self) -> &'static [&'static str];
    fn has_bounds(&self) -> bool {
        false
    }
    fn has_curves(&self) -> bool {
        false
    }
    fn trial(&self, t: usize) -> Result<TrialOutput>;
}

pub(crate) fn build(cfg: &ExperimentConfig, truth_seed: u64) -> Result<Box<dyn Study>> {
    Ok(match cfg.experiment {
        Preset::Table1 | Preset::Table2 | Preset::FigTop3 | Preset::FigKappa => {
            Box::new(CompletionStudy::new(cfg, truth_seed)?)
        }
        Preset::AlphaSweep | Preset::LinearVsCompletion => Box::new(AlsStudy::new(cfg, truth_seed)?),
        Preset::DenoiseBounds => Box::new(DenoiseStudy::new(cfg, truth_seed)?),
    })
}

fn label(parts: &[(&str, String)]) -> String {
    parts.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
}

fn lambda_label(l: f64) -> String {
    format!("{l:.4e}")
}

fn params(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn with_lambda(base: &EstimatorConfig, lambda: f64, seed: u64) -> EstimatorConfig {
    EstimatorConfig {
        lambda,
        seed,
        ..base.clone()
    }
}

fn split(obs: &ObservationSet, fit_len: usize) -> Result<(ObservationSet, Option<ObservationSet>)> {
    if fit_len >= obs.len() {
        return Ok((obs.clone(), None));
    }
    let head: Vec<usize> = (0..fit_len).collect();
    let tail: Vec<usize> = (fit_len..obs.len()).collect();
    Ok((obs.subset(&head)?, Some(obs.subset(&tail)?)))
}

fn metrics_row(trial: usize, setting: &str, method: &str, t: &TangentSpace, star: &SyntheticTruth, mse: Option<f64>) -> Result<ResultRow> {
    let m = discovery_metrics(t, &star.t_star)?;
    Ok(ResultRow::new(trial, setting, method, &m, t.rank(), mse))
}

/// Nuclear-norm completion on the 70×70 stylized problem: table1, table2,
/// fig_top3 and fig_kappa.
struct CompletionStudy {
    preset: Preset,
    cfg: ExperimentConfig,
    truth: SyntheticTruth,
    groups: Vec<Group>,
    settings: Vec<SettingInfo>,
}

struct Group {
    sigma: f64,
    seed: u64,
    /// (setting index of the first rank, λ) per penalty.
    lambdas: Vec<(usize, f64)>,
}

impl CompletionStudy {
    fn new(cfg: &ExperimentConfig, truth_seed: u64) -> Result<Self> {
        let truth = match cfg.coherence {
            Some(mu) => gen_low_rank_coherent(cfg.p1, cfg.p2, &cfg.spectrum, mu, truth_seed)?,
            None => gen_low_rank(cfg.p1, cfg.p2, &cfg.spectrum, truth_seed)?,
        };
        let sweep = matches!(cfg.experiment, Preset::FigTop3 | Preset::FigKappa);
        let ranks: Vec<Option<usize>> = match cfg.experiment {
            Preset::Table2 | Preset::FigTop3 => cfg.pinned_ranks.iter().copied().map(Some).collect(),
            _ => vec![None],
        };
        let fit_len = cfg.observations - cfg.holdout;
        let mut groups = Vec::new();
        let mut settings = Vec::new();
        for (gi, &snr) in cfg.snr.iter().enumerate() {
            let seed = derive(cfg.seed, GROUP + gi as u64);
            let sigma = calibrate_snr(
                &truth,
                SnrModel::Completion { m: cfg.observations },
                snr,
                CALIBRATION_REPS,
                derive(seed, CALIBRATE),
            )?;
            let pilot = gen_completion(&truth, cfg.observations, sigma, derive(seed, PILOT))?;
            let (pilot_fit, _) = split(&pilot, fit_len)?;
            let lambdas: Vec<f64> = if !cfg.lambdas.is_empty() {
                cfg.lambdas.clone()
            } else if sweep {
                lambda_grid(svt_lambda_max(&pilot_fit)?, cfg.lambda_points, cfg.lambda_ratio)?
            } else {
                let grid = lambda_grid(svt_lambda_max(&pilot_fit)?, cfg.cv.points, cfg.cv.ratio)?;
                let cv = cross_validate_svt(&pilot_fit, &cfg.estimator, &grid, cfg.cv.folds, derive(seed, CV))?;
                log::info!("snr {snr}: cross-validated λ = {}", cv.best_lambda);
                vec![cv.best_lambda]
            };
            let show_lambda = sweep || lambdas.len() > 1;
            let mut group_lambdas = Vec::new();
            for &lambda in &lambdas {
                group_lambdas.push((settings.len(), lambda));
                for r in &ranks {
                    let mut parts = vec![("snr", format!("{snr}"))];
                    let mut ps = vec![("snr", snr), ("lambda", lambda)];
                    if show_lambda {
                        parts.push(("lambda", lambda_label(lambda)));
                    }
                    if let Some(r) = r {
                        parts.push(("rank", r.to_string()));
                        ps.push(("rank", *r as f64));
                    }
                    settings.push(SettingInfo {
                        setting: label(&parts),
                        params: params(&ps),
                        lambda: Some(lambda),
                        noise: sigma,
                    });
                }
            }
            groups.push(Group {
                sigma,
                seed,
                lambdas: group_lambdas,
            });
        }
        Ok(Self {
            preset: cfg.experiment,
            cfg: cfg.clone(),
            truth,
            groups,
            settings,
        })
    }

    fn pipeline(&self, est: EstimatorConfig, seed: u64) -> PipelineConfig {
        PipelineConfig {
            estimator: est,
            alpha: self.cfg.alpha[0],
            bags: self.cfg.bags,
            seed,
            mode: self.cfg.mode,
            curve: CurveMode::Boundary,
            rescale_lambda: false,
        }
    }
}

impl Study for CompletionStudy {
    fn settings(&self) -> &[SettingInfo] {
        &self.settings
    }

    fn methods(&self) -> &'static [&'static str] {
        &["none", "s3"]
    }

    fn has_curves(&self) -> bool {
        self.preset == Preset::FigKappa
    }

    fn trial(&self, t: usize) -> Result<TrialOutput> {
        let cfg = &self.cfg;
        let mut out = TrialOutput::default();
        for g in &self.groups {
            let ts = derive(g.seed, t as u64);
            let data = gen_completion(&self.truth, cfg.observations, g.sigma, derive(ts, 0))?;
            let (fit_part, test) = split(&data, cfg.observations - cfg.holdout)?;
            for (li, &(first, lambda)) in g.lambdas.iter().enumerate() {
                let est = with_lambda(&cfg.estimator, lambda, derive(ts, 2));
                let pcfg = self.pipeline(est.clone(), derive(ts, 3 + li as u64));
                let full = fit(&data, &est, None)?;
                match self.preset {
                    Preset::Table1 => {
                        let s = &self.settings[first].setting;
                        let none = fit(&fit_part, &est, None)?;
                        let mse = match (&test, &none.matrix) {
                            (Some(test), Some(m)) => Some(holdout_mse(m, test)),
                            _ => None,
                        };
                        out.rows.push(metrics_row(t, s, "none", &none.tangent()?, &self.truth, mse)?);
                        let bags = estimate_bags(&data, &pcfg, full.matrix.as_ref())?;
                        let (rep, _) = select(&bags, pcfg.alpha, pcfg.mode, pcfg.curve)?;
                        let ts3 = rep.selected.tangent().expect("tangent mode");
                        let mse = match &test {
                            Some(test) => Some(holdout_mse(&refit(ts3, &fit_part)?, test)),
                            None => None,
                        };
                        out.rows.push(metrics_row(t, s, "s3", ts3, &self.truth, mse)?);
                    }
                    Preset::Table2 | Preset::FigTop3 => {
                        let l = full.matrix.as_ref().expect("nuclear-norm estimate");
                        let bags = estimate_bags(&data, &pcfg, Some(l))?;
                        let avg = average_projectors(bags.tangents()?)?;
                        for (ri, &r) in cfg.pinned_ranks.iter().enumerate() {
                            let s = &self.settings[first + ri].setting;
                            let none = truncated_tangent(l, r, est.rank_tol)?;
                            out.rows.push(metrics_row(t, s, "none", &none, &self.truth, None)?);
                            let (pinned, _) = rank_pinned(&avg, r)?;
                            out.rows.push(metrics_row(t, s, "s3", &pinned, &self.truth, None)?);
                        }
                    }
                    Preset::FigKappa => {
                        let s = &self.settings[first].setting;
                        out.rows.push(metrics_row(t, s, "none", &full.tangent()?, &self.truth, None)?);
                        let bags = estimate_bags(&data, &pcfg, full.matrix.as_ref())?;
                        let avg = average_projectors(bags.tangents()?)?;
                        let rep = select_stable_with(&avg, pcfg.alpha, CurveMode::Boundary)?;
                        let ts3 = rep.selected.tangent().expect("tangent mode");
                        out.rows.push(metrics_row(t, s, "s3", ts3, &self.truth, None)?);
                        for (r, sigma_min) in sigma_min_curve(&avg, cfg.curve_max_rank) {
                            out.curves.push(CurveRow {
                                trial: t,
                                setting: s.clone(),
                                r,
                                sigma_min,
                            });
                        }
                    }
                    _ => unreachable!("not a completion preset"),
                }
            }
        }
        Ok(out)
    }
}

/// ALS with and without subsampling: alpha_sweep and linear_vs_completion.
struct AlsStudy {
    preset: Preset,
    cfg: ExperimentConfig,
    arms: Vec<Arm>,
    settings: Vec<SettingInfo>,
}

struct Arm {
    linear: bool,
    observations: usize,
    truth: SyntheticTruth,
    noise: f64,
    lambda: f64,
    seed: u64,
    first_setting: usize,
}

impl AlsStudy {
    fn new(cfg: &ExperimentConfig, truth_seed: u64) -> Result<Self> {
        // (linear, p, snr list, observations, holdout)
        let mut families = vec![(false, cfg.p1, cfg.p2, cfg.snr.clone(), cfg.observations, cfg.holdout)];
        if cfg.experiment == Preset::LinearVsCompletion {
            if let Some(l) = &cfg.linear {
                families.push((true, l.p, l.p, l.snr.clone(), l.observations, l.holdout));
            }
        }
        let alphas: &[f64] = match cfg.experiment {
            Preset::AlphaSweep => &cfg.alpha,
            _ => &cfg.alpha[..1],
        };
        let mut arms = Vec::new();
        let mut settings = Vec::new();
        for (linear, p1, p2, snrs, n, holdout) in families {
            for &rank in &cfg.truth_ranks {
                for &snr in &snrs {
                    let ai = arms.len() as u64;
                    let seed = derive(cfg.seed, GROUP + ai);
                    let truth = gen_low_rank(p1, p2, &vec![1.0; rank], derive(truth_seed, ai))?;
                    let model = if linear {
                        SnrModel::Linear
                    } else {
                        SnrModel::Completion { m: n }
                    };
                    let noise = calibrate_snr(&truth, model, snr, CALIBRATION_REPS, derive(seed, CALIBRATE))?;
                    let lambda = match cfg.lambdas.first() {
                        Some(&l) => l,
                        None => {
                            let (train, valid) = if linear {
                                split(&gen_linear(&truth, n + holdout, noise, derive(seed, PILOT))?, n)?
                            } else {
                                split(&gen_completion(&truth, n, noise, derive(seed, PILOT))?, n - holdout)?
                            };
                            let valid = valid.expect("holdout is non-empty");
                            let grid = lambda_grid(als_lambda_max(&train)?, cfg.cv.points, cfg.cv.ratio)?;
                            let est = with_lambda(&cfg.estimator, 1.0, derive(seed, CV));
                            select_als_lambda(&train, &valid, &est, &grid)?.best_lambda
                        }
                    };
                    let model_name = if linear { "linear" } else { "completion" };
                    let first_setting = settings.len();
                    for &alpha in alphas {
                        let mut parts = vec![
                            ("model", model_name.to_string()),
                            ("rank", rank.to_string()),
                            ("snr", format!("{snr}")),
                        ];
                        if cfg.experiment == Preset::AlphaSweep {
                            parts.push(("alpha", format!("{alpha}")));
                        }
                        settings.push(SettingInfo {
                            setting: label(&parts),
                            params: params(&[
                                ("p", p1 as f64),
                                ("rank", rank as f64),
                                ("snr", snr),
                                ("alpha", alpha),
                                ("linear", if linear { 1.0 } else { 0.0 }),
                            ]),
                            lambda: Some(lambda),
                            noise,
                        });
                    }
                    arms.push(Arm {
                        linear,
                        observations: n,
                        truth,
                        noise,
                        lambda,
                        seed,
                        first_setting,
                    });
                }
            }
        }
        Ok(Self {
            preset: cfg.experiment,
            cfg: cfg.clone(),
            arms,
            settings,
        })
    }
}

impl Study for AlsStudy {
    fn settings(&self) -> &[SettingInfo] {
        &self.settings
    }

    fn methods(&self) -> &'static [&'static str] {
        match self.preset {
            Preset::AlphaSweep => &["s3"],
            _ => &["none", "s3"],
        }
    }

    fn trial(&self, t: usize) -> Result<TrialOutput> {
        let cfg = &self.cfg;
        let mut out = TrialOutput::default();
        for arm in &self.arms {
            let ts = derive(arm.seed, t as u64);
            let data = if arm.linear {
                gen_linear(&arm.truth, arm.observations, arm.noise, derive(ts, 0))?
            } else {
                gen_completion(&arm.truth, arm.observations, arm.noise, derive(ts, 0))?
            };
            let est = with_lambda(&cfg.estimator, arm.lambda, derive(ts, 2));
            let pcfg = PipelineConfig {
                estimator: est.clone(),
                alpha: cfg.alpha[0],
                bags: cfg.bags,
                seed: derive(ts, 3),
                mode: cfg.mode,
                curve: CurveMode::Boundary,
                rescale_lambda: false,
            };
            if self.preset == Preset::LinearVsCompletion {
                let none = fit(&data, &est, None)?;
                let s = &self.settings[arm.first_setting].setting;
                out.rows.push(metrics_row(t, s, "none", &none.tangent()?, &arm.truth, None)?);
            }
            let bags = estimate_bags(&data, &pcfg, None)?;
            let alphas: &[f64] = match self.preset {
                Preset::AlphaSweep => &cfg.alpha,
                _ => &cfg.alpha[..1],
            };
            for (k, &alpha) in alphas.iter().enumerate() {
                let (rep, _) = select(&bags, alpha, pcfg.mode, pcfg.curve)?;
                let s = &self.settings[arm.first_setting + k].setting;
                let ts3 = rep.selected.tangent().expect("tangent mode");
                out.rows.push(metrics_row(t, s, "s3", ts3, &arm.truth, None)?);
            }
        }
        Ok(out)
    }
}

/// Replicate denoising with the rank-k spectral estimator, reporting the
/// computable bounds next to the realized false discovery.
struct DenoiseStudy {
    cfg: ExperimentConfig,
    truth: SyntheticTruth,
    groups: Vec<DenoiseGroup>,
    settings: Vec<SettingInfo>,
}

struct DenoiseGroup {
    gamma: f64,
    delta: f64,
    seed: u64,
    /// Per estimator rank: the F term and the first setting index.
    per_k: Vec<(FTerm, usize)>,
}

impl DenoiseStudy {
    fn new(cfg: &ExperimentConfig, truth_seed: u64) -> Result<Self> {
        let truth = gen_low_rank(cfg.p1, cfg.p2, &cfg.spectrum, truth_seed)?;
        let mut groups = Vec::new();
        let mut settings = Vec::new();
        let n = cfg.observations - cfg.observations % 2;
        for &gamma in &cfg.gammas {
            for &snr in &cfg.snr {
                let seed = derive(cfg.seed, GROUP + groups.len() as u64);
                let delta = calibrate_snr(&truth, SnrModel::Denoise { gamma }, snr, CALIBRATION_REPS, derive(seed, CALIBRATE))?;
                let model = DataModel::Denoise { n, delta, gamma };
                let mut per_k = Vec::new();
                for (ki, &k) in cfg.estimator_ranks.iter().enumerate() {
                    let est = EstimatorConfig {
                        k,
                        ..cfg.estimator.clone()
                    };
                    let ft = f_term(
                        &truth,
                        &est,
                        &model,
                        BoundMode::Tangent,
                        cfg.basis_mode,
                        &FBasis::SingularVectors,
                        cfg.mc_reps,
                        derive(seed, FTERM + ki as u64),
                    )?;
                    log::info!("gamma {gamma}, k {k}: F = {}, q = {}", ft.f, ft.q);
                    per_k.push((ft, settings.len()));
                    for &alpha in &cfg.alpha {
                        settings.push(SettingInfo {
                            setting: label(&[
                                ("gamma", format!("{gamma}")),
                                ("snr", format!("{snr}")),
                                ("k", k.to_string()),
                                ("alpha", format!("{alpha}")),
                            ]),
                            params: params(&[("gamma", gamma), ("snr", snr), ("k", k as f64), ("alpha", alpha)]),
                            lambda: None,
                            noise: delta,
                        });
                    }
                }
                groups.push(DenoiseGroup {
                    gamma,
                    delta,
                    seed,
                    per_k,
                });
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            truth,
            groups,
            settings,
        })
    }
}

impl Study for DenoiseStudy {
    fn settings(&self) -> &[SettingInfo] {
        &self.settings
    }

    fn methods(&self) -> &'static [&'static str] {
        &["none", "s3"]
    }

    fn has_bounds(&self) -> bool {
        true
    }

    fn trial(&self, t: usize) -> Result<TrialOutput> {
        let cfg = &self.cfg;
        let mut out = TrialOutput::default();
        for g in &self.groups {
            let ts = derive(g.seed, t as u64);
            let data = gen_denoise(&self.truth, cfg.observations, g.delta, g.gamma, derive(ts, 0))?;
            for (ki, (ft, first)) in g.per_k.iter().enumerate() {
                let est = EstimatorConfig {
                    k: cfg.estimator_ranks[ki],
                    ..cfg.estimator.clone()
                };
                let none = fit(&data, &est, None)?.tangent()?;
                let pcfg = PipelineConfig {
                    estimator: est,
                    alpha: cfg.alpha[0],
                    bags: cfg.bags,
                    seed: derive(ts, 1 + ki as u64),
                    mode: cfg.mode,
                    curve: CurveMode::Boundary,
                    rescale_lambda: false,
                };
                let bags = estimate_bags(&data, &pcfg, None)?;
                for (ai, &alpha) in cfg.alpha.iter().enumerate() {
                    let s = &self.settings[first + ai].setting;
                    out.rows.push(metrics_row(t, s, "none", &none, &self.truth, None)?);
                    let (rep, _) = select(&bags, alpha, pcfg.mode, pcfg.curve)?;
                    let ts3 = rep.selected.tangent().expect("tangent mode");
                    out.rows.push(metrics_row(t, s, "s3", ts3, &self.truth, None)?);
                    let b = bound_report(ft, &self.truth, &rep.selected, &bags, alpha)?;
                    out.bounds.push(BoundRow {
                        trial: t,
                        setting: s.clone(),
                        f: b.f,
                        kappa_bag: b.kappa_bag,
                        slack_term: b.slack_term,
                        fd_bound_total: b.fd_bound_total,
                        commuting_total: b.commuting_total,
                        kappa_indiv_total: b.kappa_indiv_total,
                        q: b.q,
                        kappa_indiv: b.kappa_indiv,
                    });
                }
            }
        }
        Ok(out)
    }
}
