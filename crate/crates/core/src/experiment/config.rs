use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bounds::{BasisMode, DEFAULT_MC_REPS};
use crate::error::{invalid, Error, Result};
use crate::estimators::{EstimatorConfig, EstimatorKind};
use crate::sampling::SnrDefinition;
use crate::stability::{SelectionMode, DEFAULT_ALPHA, DEFAULT_BAGS};

pub const CONFIG_SCHEMA: &str = "ss3-experiment-1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// FD of nuclear-norm completion with and without subsampling across SNR.
    #[default]
    Table1,
    /// Rank-pinned comparison on a coherent truth.
    Table2,
    /// σ_min curves of the leading-eigenspace tangent spaces across λ and SNR.
    FigKappa,
    /// Rank-3 comparison across a λ sweep on a coherent truth.
    FigTop3,
    /// FD and power of ALS-based selection over a grid of α.
    AlphaSweep,
    /// Replicate denoising with the computable FD bounds.
    DenoiseBounds,
    /// ALS with and without subsampling for linear sensing and completion.
    LinearVsCompletion,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::Table1,
        Preset::Table2,
        Preset::FigKappa,
        Preset::FigTop3,
        Preset::AlphaSweep,
        Preset::DenoiseBounds,
        Preset::LinearVsCompletion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Table1 => "table1",
            Preset::Table2 => "table2",
            Preset::FigKappa => "fig_kappa",
            Preset::FigTop3 => "fig_top3",
            Preset::AlphaSweep => "alpha_sweep",
            Preset::DenoiseBounds => "denoise_bounds",
            Preset::LinearVsCompletion => "linear_vs_completion",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| invalid(format!("unknown preset {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSettings {
    pub folds: usize,
    pub points: usize,
    /// Smallest grid value relative to the largest.
    pub ratio: f64,
}

impl Default for CvSettings {
    fn default() -> Self {
        Self {
            folds: 5,
            points: 20,
            ratio: 1e-3,
        }
    }
}

/// The linear-sensing arm of `linear_vs_completion`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearArm {
    pub p: usize,
    pub snr: Vec<f64>,
    pub observations: usize,
    /// Extra functionals drawn for penalty selection.
    pub holdout: usize,
}

impl Default for LinearArm {
    fn default() -> Self {
        let p = 60;
        Self {
            p,
            snr: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            observations: 6 * p * p / 10,
            holdout: 3 * p * p / 20,
        }
    }
}

/// Everything a study needs. Fields a preset does not use are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: String,
    pub experiment: Preset,
    pub p1: usize,
    pub p2: usize,
    /// Singular values of the truth (ignored when `truth_ranks` is set).
    pub spectrum: Vec<f64>,
    /// Truth ranks swept with unit singular values.
    pub truth_ranks: Vec<usize>,
    /// Target incoherence of a coherent truth.
    pub coherence: Option<f64>,
    pub snr: Vec<f64>,
    pub snr_definition: SnrDefinition,
    /// |Ω| for completion, n for denoising and linear sensing.
    pub observations: usize,
    /// Observations held out of Ω for penalty selection and test error.
    pub holdout: usize,
    pub gammas: Vec<f64>,
    pub alpha: Vec<f64>,
    pub bags: usize,
    pub mode: SelectionMode,
    pub estimator: EstimatorConfig,
    /// Ranks k of the spectral estimator (denoising).
    pub estimator_ranks: Vec<usize>,
    /// Ranks at which both methods are compared (table2, fig_top3).
    pub pinned_ranks: Vec<usize>,
    /// Fixed penalties; empty means cross-validation or a sweep.
    pub lambdas: Vec<f64>,
    /// Size and span of the λ sweep when `lambdas` is empty.
    pub lambda_points: usize,
    pub lambda_ratio: f64,
    pub cv: CvSettings,
    pub mc_reps: usize,
    pub basis_mode: BasisMode,
    pub curve_max_rank: usize,
    pub linear: Option<LinearArm>,
    pub trials: usize,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig::preset(Preset::Table1)
    }
}

fn stylized_spectrum() -> Vec<f64> {
    let mut s = vec![1.0; 3];
    s.extend([0.5; 5]);
    s.extend([0.1; 2]);
    s
}

impl ExperimentConfig {
    pub fn preset(p: Preset) -> Self {
        let base = Self {
            schema: CONFIG_SCHEMA.into(),
            experiment: p,
            p1: 70,
            p2: 70,
            spectrum: stylized_spectrum(),
            truth_ranks: Vec::new(),
            coherence: None,
            snr: vec![1.5, 2.0, 2.5, 3.0],
            snr_definition: SnrDefinition::Frobenius,
            observations: 3186,
            holdout: 955,
            gammas: Vec::new(),
            alpha: vec![DEFAULT_ALPHA],
            bags: DEFAULT_BAGS,
            mode: SelectionMode::Tangent,
            estimator: EstimatorConfig::svt(1.0),
            estimator_ranks: Vec::new(),
            pinned_ranks: Vec::new(),
            lambdas: Vec::new(),
            lambda_points: 10,
            lambda_ratio: 1e-2,
            cv: CvSettings::default(),
            mc_reps: DEFAULT_MC_REPS,
            basis_mode: BasisMode::BasisIndependent,
            curve_max_rank: 20,
            linear: None,
            trials: 100,
            seed: 0,
            output_dir: None,
        };
        let als_base = |p: usize| Self {
            p1: p,
            p2: p,
            observations: 7 * p * p / 10,
            holdout: 7 * p * p / 20,
            estimator: EstimatorConfig::als(10, 1.0),
            ..base.clone()
        };
        match p {
            Preset::Table1 => base,
            Preset::Table2 => Self {
                coherence: Some(0.8),
                snr: vec![0.8],
                holdout: 0,
                pinned_ranks: vec![1, 2, 3, 4, 5],
                ..base
            },
            Preset::FigTop3 => Self {
                coherence: Some(0.8),
                snr: vec![1.6, 0.8],
                holdout: 0,
                pinned_ranks: vec![3],
                ..base
            },
            Preset::FigKappa => Self {
                snr: vec![50.0, 1.2, 0.8, 0.4],
                holdout: 0,
                lambda_points: 6,
                trials: 5,
                ..base
            },
            Preset::AlphaSweep => Self {
                truth_ranks: vec![1, 3, 5],
                snr: vec![0.5, 0.8, 2.0],
                alpha: (0..9).map(|i| 0.6 + 0.025 * i as f64).collect(),
                ..als_base(100)
            },
            Preset::LinearVsCompletion => Self {
                truth_ranks: vec![1, 2, 3, 4],
                snr: vec![0.5, 0.875, 1.25, 1.625, 2.0],
                linear: Some(LinearArm::default()),
                ..als_base(100)
            },
            Preset::DenoiseBounds => Self {
                p1: 200,
                p2: 200,
                spectrum: vec![120.0, 100.0, 80.0, 30.0, 20.0, 10.0],
                snr: vec![0.15],
                snr_definition: SnrDefinition::Spectral,
                observations: 400,
                holdout: 0,
                gammas: vec![10.0, 30.0],
                alpha: (0..12).map(|i| 0.75 + 0.02 * i as f64).collect(),
                estimator: EstimatorConfig::spectral(6),
                estimator_ranks: vec![6, 10],
                basis_mode: BasisMode::BasisDependent,
                ..base
            },
        }
    }

    /// Parses a (possibly partial) JSON config: missing fields take the
    /// defaults of the preset named by its `experiment` key.
    pub fn from_json(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_value(v)
    }

    pub fn from_value(v: Value) -> Result<Self> {
        let Value::Object(_) = &v else {
            return Err(Error::Parse("experiment config must be a JSON object".into()));
        };
        let preset = match v.get("experiment") {
            Some(Value::String(s)) => s.parse()?,
            Some(_) => return Err(Error::Parse("\"experiment\" must be a string".into())),
            None => Preset::default(),
        };
        let mut base = serde_json::to_value(Self::preset(preset)).expect("config serializes");
        merge(&mut base, v);
        let cfg: Self = serde_json::from_value(base).map_err(|e| Error::Parse(e.to_string()))?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(Error::Parse(format!("unknown config schema {:?}", cfg.schema)));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(invalid(format!("{name} must not be empty")))
            } else {
                Ok(())
            }
        };
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.p1 == 0 || self.p2 == 0 {
            return Err(invalid("dimensions must be positive"));
        }
        if self.bags < 2 || self.bags % 2 == 1 {
            return Err(invalid(format!("bags must be a positive even number, got {}", self.bags)));
        }
        nonempty("alpha", self.alpha.len())?;
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {a}")));
        }
        nonempty("snr", self.snr.len())?;
        if self.snr.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(invalid("SNR values must be positive and finite"));
        }
        if self.lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(invalid("penalties must be positive and finite"));
        }
        if self.mode == SelectionMode::Column {
            return Err(invalid("experiment presets select tangent spaces; column mode is not available"));
        }
        if let Some(c) = self.coherence {
            if !(c > 0.0 && c <= 1.0) {
                return Err(invalid("coherence must lie in (0, 1]"));
            }
        }
        self.estimator.validate()?;
        let kind = self.estimator.kind;
        let need_kind = |want: EstimatorKind| {
            if kind != want {
                Err(invalid(format!("preset {} runs the {want:?} estimator, not {kind:?}", self.experiment)))
            } else {
                Ok(())
            }
        };
        let need_def = |want: SnrDefinition| {
            if self.snr_definition != want {
                Err(invalid(format!(
                    "preset {} calibrates SNR as {want:?}, not {:?}",
                    self.experiment, self.snr_definition
                )))
            } else {
                Ok(())
            }
        };
        let check_omega = || {
            if self.observations == 0 || self.observations > self.p1 * self.p2 {
                return Err(invalid(format!(
                    "cannot observe {} of {} entries",
                    self.observations,
                    self.p1 * self.p2
                )));
            }
            if self.holdout >= self.observations {
                return Err(invalid("holdout must leave observations to fit"));
            }
            Ok(())
        };
        match self.experiment {
            Preset::Table1 | Preset::Table2 | Preset::FigTop3 | Preset::FigKappa => {
                need_kind(EstimatorKind::Svt)?;
                need_def(SnrDefinition::Frobenius)?;
                nonempty("spectrum", self.spectrum.len())?;
                check_omega()?;
                if self.lambdas.is_empty() {
                    if matches!(self.experiment, Preset::FigTop3 | Preset::FigKappa) {
                        if self.lambda_points == 0 || !(self.lambda_ratio > 0.0 && self.lambda_ratio <= 1.0) {
                            return Err(invalid("λ sweep needs lambda_points ≥ 1 and lambda_ratio in (0, 1]"));
                        }
                    } else if self.cv.folds < 2 || self.cv.points == 0 {
                        return Err(invalid("cross-validation needs ≥ 2 folds and ≥ 1 grid point"));
                    }
                }
                if matches!(self.experiment, Preset::Table2 | Preset::FigTop3) {
                    nonempty("pinned_ranks", self.pinned_ranks.len())?;
                    let rmax = self.p1.min(self.p2);
                    if self.pinned_ranks.iter().any(|&r| r == 0 || r > rmax) {
                        return Err(invalid(format!("pinned ranks must lie in 1..={rmax}")));
                    }
                }
            }
            Preset::AlphaSweep | Preset::LinearVsCompletion => {
                need_kind(EstimatorKind::Als)?;
                need_def(SnrDefinition::Frobenius)?;
                nonempty("truth_ranks", self.truth_ranks.len())?;
                if self.lambdas.len() > 1 {
                    return Err(invalid("ALS presets take at most one fixed penalty"));
                }
                check_omega()?;
                if self.lambdas.is_empty() && (self.holdout == 0 || self.cv.points == 0) {
                    return Err(invalid("holdout selection of λ needs a holdout set and a grid"));
                }
                if let Some(l) = &self.linear {
                    nonempty("linear.snr", l.snr.len())?;
                    if l.p == 0 || l.observations == 0 {
                        return Err(invalid("linear arm needs p ≥ 1 and observations ≥ 1"));
                    }
                    if self.lambdas.is_empty() && l.holdout == 0 {
                        return Err(invalid("linear arm needs holdout functionals to select λ"));
                    }
                }
                let rmax = self.p1.min(self.p2).min(self.linear.as_ref().map_or(usize::MAX, |l| l.p));
                if self.truth_ranks.iter().any(|&r| r == 0 || r > rmax) {
                    return Err(invalid(format!("truth ranks must lie in 1..={rmax}")));
                }
            }
            Preset::DenoiseBounds => {
                need_kind(EstimatorKind::Spectral)?;
                need_def(SnrDefinition::Spectral)?;
                nonempty("spectrum", self.spectrum.len())?;
                nonempty("gammas", self.gammas.len())?;
                nonempty("estimator_ranks", self.estimator_ranks.len())?;
                if self.gammas.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
                    return Err(invalid("γ must be non-negative and finite"));
                }
                if self.observations < 4 {
                    return Err(invalid("denoising needs at least four replicates"));
                }
                if self.mc_reps < 2 {
                    return Err(invalid("the F term needs at least two Monte-Carlo replicates"));
                }
                if let Some(a) = self.alpha.iter().find(|a| **a <= 0.5) {
                    return Err(invalid(format!("the bounds need alpha in (1/2, 1), got {a}")));
                }
                let rmax = self.p1.min(self.p2);
                if self.estimator_ranks.iter().any(|&k| k == 0 || k > rmax) {
                    return Err(invalid(format!("estimator ranks must lie in 1..={rmax}")));
                }
            }
        }
        Ok(())
    }
}

/// Recursive object merge: `patch` wins, objects merge key by key.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for p in Preset::ALL {
            let c = ExperimentConfig::preset(p);
            c.validate().unwrap_or_else(|e| panic!("{p}: {e}"));
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
        }
        assert!("nope".parse::<Preset>().is_err());
        assert_eq!("fig-top3".parse::<Preset>().unwrap(), Preset::FigTop3);
    }

    #[test]
    fn partial_json_takes_preset_defaults() {
        let c = ExperimentConfig::from_json(r#"{"experiment": "table2", "trials": 3, "estimator": {"max_iters": 50}}"#)
            .unwrap();
        assert_eq!(c.trials, 3);
        assert_eq!(c.coherence, Some(0.8));
        assert_eq!(c.pinned_ranks, vec![1, 2, 3, 4, 5]);
        assert_eq!(c.estimator.max_iters, 50);
        assert_eq!(c.estimator.kind, EstimatorKind::Svt);
        assert!(ExperimentConfig::from_json(r#"{"trails": 3}"#).is_err());
        let round = ExperimentConfig::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn alpha_grids() {
        let a = ExperimentConfig::preset(Preset::AlphaSweep).alpha;
        assert_eq!(a.len(), 9);
        assert!((a[8] - 0.8).abs() < 1e-12);
        let d = ExperimentConfig::preset(Preset::DenoiseBounds).alpha;
        assert!((d[11] - 0.97).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ExperimentConfig::preset(Preset::Table1);
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(Preset::Table1);
        c.alpha = vec![];
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(Preset::Table1);
        c.estimator = EstimatorConfig::als(3, 1.0);
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset(Preset::DenoiseBounds);
        c.alpha = vec![0.5];
        assert!(c.validate().is_err());
    }
}
