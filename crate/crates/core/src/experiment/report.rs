use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::DiscoveryMetrics;
use crate::numeric;

use super::{ExperimentConfig, Preset};

pub const REPORT_SCHEMA: &str = "ss3-report-1";

/// One line of results.csv.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub trial: usize,
    pub setting: String,
    pub method: String,
    pub fd: f64,
    pub pw: f64,
    pub fdr: f64,
    pub rank: usize,
    pub mse: Option<f64>,
}

impl ResultRow {
    pub(crate) fn new(trial: usize, setting: &str, method: &str, m: &DiscoveryMetrics, rank: usize, mse: Option<f64>) -> Self {
        Self {
            trial,
            setting: setting.into(),
            method: method.into(),
            fd: m.fd,
            pw: m.pw,
            fdr: m.fdr,
            rank,
            mse,
        }
    }
}

/// One line of bounds.csv (denoising study).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub trial: usize,
    pub setting: String,
    #[serde(rename = "F")]
    pub f: f64,
    pub kappa_bag: f64,
    pub slack_term: f64,
    pub fd_bound_total: f64,
    pub commuting_total: f64,
    pub kappa_indiv_total: f64,
    pub q: f64,
    pub kappa_indiv: f64,
}

/// One line of curves.csv: σ_min of the rank-r leading tangent space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub trial: usize,
    pub setting: String,
    pub r: usize,
    pub sigma_min: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrialOutput {
    pub rows: Vec<ResultRow>,
    pub bounds: Vec<BoundRow>,
    pub curves: Vec<CurveRow>,
}

/// A cell of the study design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingInfo {
    pub setting: String,
    pub params: BTreeMap<String, f64>,
    /// Penalty used by the estimator, when it has one.
    pub lambda: Option<f64>,
    /// Calibrated noise scale (σ, or δ for denoising).
    pub noise: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub sd: f64,
}

impl Stat {
    fn of(xs: &[f64]) -> Self {
        let (mean, sd) = numeric::mean_sd(xs);
        Self { mean, sd }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub trials: usize,
    pub fd: Stat,
    pub pw: Stat,
    pub fdr: Stat,
    pub rank: Stat,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mse: Option<Stat>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundSummary {
    #[serde(rename = "F")]
    pub f: f64,
    pub q: f64,
    pub kappa_bag: Stat,
    pub slack_term: Stat,
    pub fd_bound_total: Stat,
    pub commuting_total: Stat,
    pub kappa_indiv_total: Stat,
    pub kappa_indiv: Stat,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r: usize,
    pub sigma_min: Stat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    #[serde(flatten)]
    pub info: SettingInfo,
    pub methods: BTreeMap<String, MethodSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bounds: Option<BoundSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub sigma_min_curve: Vec<CurvePoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema: String,
    pub experiment: Preset,
    pub trials: usize,
    pub truth_seed: u64,
    pub config: ExperimentConfig,
    pub settings: Vec<SettingSummary>,
}

impl ExperimentSummary {
    pub fn setting(&self, label: &str) -> Option<&SettingSummary> {
        self.settings.iter().find(|s| s.info.setting == label)
    }
}

pub(crate) fn summarize(
    cfg: &ExperimentConfig,
    truth_seed: u64,
    settings: &[SettingInfo],
    methods: &[&str],
    out: &[TrialOutput],
) -> ExperimentSummary {
    let rows: Vec<&ResultRow> = out.iter().flat_map(|t| &t.rows).collect();
    let bounds: Vec<&BoundRow> = out.iter().flat_map(|t| &t.bounds).collect();
    let curves: Vec<&CurveRow> = out.iter().flat_map(|t| &t.curves).collect();
    let mut cfg = cfg.clone();
    cfg.output_dir = None;

    let summaries = settings
        .iter()
        .map(|info| {
            let mut by_method = BTreeMap::new();
            for &m in methods {
                let rs: Vec<&&ResultRow> = rows.iter().filter(|r| r.setting == info.setting && r.method == m).collect();
                if rs.is_empty() {
                    continue;
                }
                let col = |f: &dyn Fn(&ResultRow) -> f64| Stat::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
                let mses: Vec<f64> = rs.iter().filter_map(|r| r.mse).collect();
                by_method.insert(
                    m.to_string(),
                    MethodSummary {
                        trials: rs.len(),
                        fd: col(&|r| r.fd),
                        pw: col(&|r| r.pw),
                        fdr: col(&|r| r.fdr),
                        rank: col(&|r| r.rank as f64),
                        mse: (mses.len() == rs.len()).then(|| Stat::of(&mses)),
                    },
                );
            }
            let bs: Vec<&&BoundRow> = bounds.iter().filter(|b| b.setting == info.setting).collect();
            let bound_summary = (!bs.is_empty()).then(|| {
                let col = |f: &dyn Fn(&BoundRow) -> f64| Stat::of(&bs.iter().map(|b| f(b)).collect::<Vec<_>>());
                BoundSummary {
                    f: bs[0].f,
                    q: bs[0].q,
                    kappa_bag: col(&|b| b.kappa_bag),
                    slack_term: col(&|b| b.slack_term),
                    fd_bound_total: col(&|b| b.fd_bound_total),
                    commuting_total: col(&|b| b.commuting_total),
                    kappa_indiv_total: col(&|b| b.kappa_indiv_total),
                    kappa_indiv: col(&|b| b.kappa_indiv),
                }
            });
            let cs: Vec<&&CurveRow> = curves.iter().filter(|c| c.setting == info.setting).collect();
            let mut by_r: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for c in cs {
                by_r.entry(c.r).or_default().push(c.sigma_min);
            }
            SettingSummary {
                info: info.clone(),
                methods: by_method,
                bounds: bound_summary,
                sigma_min_curve: by_r
                    .into_iter()
                    .map(|(r, xs)| CurvePoint {
                        r,
                        sigma_min: Stat::of(&xs),
                    })
                    .collect(),
            }
        })
        .collect();
    ExperimentSummary {
        schema: REPORT_SCHEMA.into(),
        experiment: cfg.experiment,
        trials: cfg.trials,
        truth_seed,
        config: cfg,
        settings: summaries,
    }
}

/// Writers for the long-format CSV files; each trial is flushed as soon as
/// it is complete so an interrupted run keeps what it finished.
pub(crate) struct Sinks {
    results: csv::Writer<File>,
    bounds: Option<csv::Writer<File>>,
    curves: Option<csv::Writer<File>>,
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        k => Error::Parse(format!("{k:?}")),
    }
}

impl Sinks {
    pub(crate) fn create(dir: &Path, bounds: bool, curves: bool) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| csv::Writer::from_path(dir.join(name)).map_err(csv_err);
        Ok(Self {
            results: open("results.csv")?,
            bounds: if bounds { Some(open("bounds.csv")?) } else { None },
            curves: if curves { Some(open("curves.csv")?) } else { None },
        })
    }

    pub(crate) fn write(&mut self, t: &TrialOutput) -> Result<()> {
        for r in &t.rows {
            self.results.serialize(r).map_err(csv_err)?;
        }
        self.results.flush()?;
        if let Some(w) = &mut self.bounds {
            for b in &t.bounds {
                w.serialize(b).map_err(csv_err)?;
            }
            w.flush()?;
        }
        if let Some(w) = &mut self.curves {
            for c in &t.curves {
                w.serialize(c).map_err(csv_err)?;
            }
            w.flush()?;
        }
        Ok(())
    }
}
