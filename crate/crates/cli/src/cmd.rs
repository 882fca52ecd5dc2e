use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use ss3::bounds::{
    bound_report, dim_t_bound, f_term, kappa_indiv_column, kappa_indiv_estimate, kappa_indiv_bound, kappa_indiv_bound_column,
    BasisMode, BoundMode, BoundReport, DataModel, FBasis,
};
use ss3::estimators::{
    cross_validate_svt, extract_tangent, fit, lambda_grid, svt_lambda_max, EstimatorConfig, EstimatorKind,
    ObservationSet,
};
use ss3::experiment::{run_experiment, CvSettings, ExperimentConfig, REPORT_SCHEMA};
use ss3::io;
use ss3::linalg::{orthonormalize, Subspace, TangentSpace};
use ss3::metrics::{column_metrics, discovery_metrics, DiscoveryMetrics};
use ss3::rng::derive;
use ss3::sampling::{calibrate_snr, gen_low_rank, gen_low_rank_coherent, SnrModel, SyntheticTruth};
use ss3::stability::{
    estimate_bags, select, CurveMode, Diagnostics, PipelineConfig, Selected, SelectionMode, StabilityReport,
};

use crate::{
    BasisArg, BoundsArgs, EstimateArgs, Estimator, EstimatorArgs, ExperimentArgs, GenerateArgs, InputArgs,
    MetricsArgs, Model, StabilityArgs, StabilizeArgs,
};

const CALIBRATION_REPS: usize = 200;

// Seed tags.
const TRUTH: u64 = 0;
const DATA: u64 = 1;
const CALIBRATE: u64 = 2;
const ESTIMATOR: u64 = 3;
const BAGS: u64 = 4;
const CV: u64 = 5;
const FTERM: u64 = 6;

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ss3::Error::InvalidInput(msg.into()).into()
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => io::write_json(p, value).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let mut s = std::io::stdout().lock();
            serde_json::to_writer_pretty(&mut s, value)?;
            writeln!(s)?;
        }
    }
    Ok(())
}

fn warn_alpha(alpha: f64) {
    if alpha <= 0.5 {
        log::warn!("alpha = {alpha} ≤ 1/2: stable sets are defined, but the false-discovery bounds need alpha > 1/2");
    }
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let truth = match a.coherence {
        Some(mu) => gen_low_rank_coherent(a.p1, a.p2, &a.spectrum, mu, derive(a.seed, TRUTH))?,
        None => gen_low_rank(a.p1, a.p2, &a.spectrum, derive(a.seed, TRUTH))?,
    };
    let n = a.observations;
    let snr_model = match a.model {
        Model::Completion => SnrModel::Completion { m: n },
        Model::Denoise => SnrModel::Denoise { gamma: a.gamma },
        Model::Linear => SnrModel::Linear,
    };
    let noise = match (a.snr, a.noise) {
        (Some(snr), _) => calibrate_snr(&truth, snr_model, snr, CALIBRATION_REPS, derive(a.seed, CALIBRATE))?,
        (None, Some(x)) => x,
        (None, None) => return Err(config_error("give --snr or --noise")),
    };
    let model = match a.model {
        Model::Completion => DataModel::Completion { m: n, sigma: noise },
        Model::Denoise => DataModel::Denoise {
            n,
            delta: noise,
            gamma: a.gamma,
        },
        Model::Linear => DataModel::Linear { n, sigma: noise },
    };
    let obs = model.generate(&truth, derive(a.seed, DATA))?;

    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let truth_path = io::write_truth(&a.out, "truth", &truth)?;
    let obs_path = match a.model {
        Model::Completion => a.out.join("obs.csv"),
        _ => a.out.join("obs"),
    };
    io::write_observations(&obs_path, &obs)?;
    let model_path = a.out.join("model.json");
    io::write_json(&model_path, &model)?;
    emit(
        &json!({
            "truth": truth_path,
            "observations": obs_path,
            "data_model": model_path,
            "noise": noise,
            "rank": truth.rank(),
        }),
        None,
    )
}

fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| config_error(format!("--dims must look like 70x70, got {s:?}")))?;
    let p = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| config_error(format!("bad dimension {t:?}")))
    };
    Ok((p(a)?, p(b)?))
}

fn load_obs(input: &InputArgs, truth: Option<&SyntheticTruth>) -> Result<ObservationSet> {
    let dims = match (&input.dims, truth) {
        (Some(d), _) => Some(parse_dims(d)?),
        (None, Some(t)) => Some(t.dims()),
        (None, None) => None,
    };
    io::read_observations(&input.obs, dims).with_context(|| format!("reading {}", input.obs.display()))
}

fn estimator_config(a: &EstimatorArgs, obs: &ObservationSet) -> Result<EstimatorConfig> {
    let mut cfg = match a.estimator {
        Estimator::Svt => EstimatorConfig::svt(1.0),
        Estimator::Als => EstimatorConfig::als(a.k, 1.0),
        Estimator::Spectral => EstimatorConfig::spectral(a.k),
        Estimator::Pca => EstimatorConfig::pca_column(a.k),
    };
    cfg.seed = derive(a.seed, ESTIMATOR);
    match (cfg.kind, a.lambda) {
        (_, Some(l)) => cfg.lambda = l,
        (EstimatorKind::Svt, None) => {
            let cv = CvSettings::default();
            let grid = lambda_grid(svt_lambda_max(obs)?, cv.points, cv.ratio)?;
            let res = cross_validate_svt(obs, &cfg, &grid, cv.folds, derive(a.seed, CV))?;
            log::info!("cross-validated lambda = {}", res.best_lambda);
            cfg.lambda = res.best_lambda;
        }
        (EstimatorKind::Als, None) => return Err(config_error("--lambda is required for als")),
        _ => {}
    }
    Ok(cfg)
}

pub fn estimate(a: EstimateArgs) -> Result<()> {
    let obs = load_obs(&a.input, None)?;
    let cfg = estimator_config(&a.estimator, &obs)?;
    let f = fit(&obs, &cfg, None)?;
    if !f.converged {
        log::warn!("estimator hit max_iters before converging");
    }
    let written = match &f.matrix {
        Some(m) => m.clone(),
        None => f.col.basis().clone(),
    };
    io::write_matrix(&a.out, &written).with_context(|| format!("writing {}", a.out.display()))?;
    emit(
        &json!({
            "estimator": cfg,
            "rank": f.col.rank(),
            "converged": f.converged,
            "estimate": a.out,
        }),
        None,
    )
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurvePoint {
    pub r: usize,
    pub sigma_min: f64,
}

/// What `stabilize` writes; bases are CSV paths relative to the report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilizeReport {
    pub schema: String,
    pub mode: SelectionMode,
    pub alpha: f64,
    pub membership_level: f64,
    pub estimator: EstimatorConfig,
    pub p1: usize,
    pub p2: usize,
    pub bags: usize,
    pub bags_used: usize,
    pub non_converged: usize,
    pub r_selected: usize,
    /// Tangent-space dimension, or column-space rank in column mode.
    pub dim: usize,
    pub sigma_min_curve: Vec<CurvePoint>,
    pub diagnostics: Diagnostics,
    pub col_basis: String,
    pub row_basis: Option<String>,
}

struct Stabilized {
    cfg: PipelineConfig,
    bags: ss3::stability::BagEstimates,
    report: StabilityReport,
    avg: Option<ss3::stability::AveragedProjectors>,
}

fn stabilize_obs(obs: &ObservationSet, est: &EstimatorArgs, st: &StabilityArgs) -> Result<Stabilized> {
    warn_alpha(st.alpha);
    let cfg = PipelineConfig {
        estimator: estimator_config(est, obs)?,
        alpha: st.alpha,
        bags: st.bags,
        seed: derive(est.seed, BAGS),
        mode: st.mode.into(),
        curve: if st.full_curve { CurveMode::Full } else { CurveMode::Boundary },
        rescale_lambda: false,
    };
    let warm = match cfg.estimator.kind {
        EstimatorKind::Svt => fit(obs, &cfg.estimator, None)?.matrix,
        _ => None,
    };
    let bags = estimate_bags(obs, &cfg, warm.as_ref())?;
    let (report, avg) = select(&bags, cfg.alpha, cfg.mode, cfg.curve)?;
    Ok(Stabilized { cfg, bags, report, avg })
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}_{suffix}.csv"))
}

pub fn stabilize(a: StabilizeArgs) -> Result<()> {
    let obs = load_obs(&a.input, None)?;
    let s = stabilize_obs(&obs, &a.estimator, &a.stability)?;
    let (p1, p2) = obs.dims();
    let name = |p: &Path| p.file_name().unwrap().to_string_lossy().into_owned();
    let col_path = sibling(&a.out, "col");
    io::write_matrix_csv(&col_path, s.report.selected.column_space().basis())?;
    let (row_basis, dim) = match &s.report.selected {
        Selected::Tangent(t) => {
            let row_path = sibling(&a.out, "row");
            io::write_matrix_csv(&row_path, t.row().basis())?;
            (Some(name(&row_path)), t.dim())
        }
        Selected::Column(c) => (None, c.rank()),
    };
    let report = StabilizeReport {
        schema: REPORT_SCHEMA.into(),
        mode: s.report.mode,
        alpha: s.report.alpha,
        membership_level: s.report.membership_level,
        estimator: s.cfg.estimator.clone(),
        p1,
        p2,
        bags: s.cfg.bags,
        bags_used: s.bags.fits.len(),
        non_converged: s.bags.non_converged(),
        r_selected: s.report.r_selected,
        dim,
        sigma_min_curve: s
            .report
            .sigma_min_curve
            .iter()
            .map(|&(r, sigma_min)| CurvePoint { r, sigma_min })
            .collect(),
        diagnostics: s.report.diagnostics,
        col_basis: name(&col_path),
        row_basis,
    };
    emit(&report, Some(&a.out))?;
    eprintln!("selected rank {} (dim {dim}); report at {}", report.r_selected, a.out.display());
    Ok(())
}

fn load_truth(path: &Path, rank_tol: f64) -> Result<TangentSpace> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(io::read_truth(path)
            .with_context(|| format!("reading {}", path.display()))?
            .t_star)
    } else {
        let m = io::read_matrix(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(extract_tangent(&m, rank_tol)?)
    }
}

enum Estimate {
    Tangent(TangentSpace),
    Column(Subspace),
}

fn load_estimate(path: &Path, dims: (usize, usize), rank_tol: f64) -> Result<Estimate> {
    let read = |p: &Path| io::read_matrix(p).with_context(|| format!("reading {}", p.display()));
    if path.extension().is_some_and(|e| e == "json") {
        let r: StabilizeReport = io::read_json(path).with_context(|| format!("reading {}", path.display()))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let col = Subspace::from_orthonormal(read(&dir.join(&r.col_basis))?)?;
        return Ok(match &r.row_basis {
            Some(row) => Estimate::Tangent(TangentSpace::new(col, Subspace::from_orthonormal(read(&dir.join(row))?)?)?),
            None => Estimate::Column(col),
        });
    }
    let m = read(path)?;
    if m.shape() == dims {
        Ok(Estimate::Tangent(extract_tangent(&m, rank_tol)?))
    } else if m.nrows() == dims.0 && m.ncols() < dims.0 {
        // A p1×k matrix is read as a column-space basis (pca output).
        Ok(Estimate::Column(orthonormalize(&m, rank_tol)?))
    } else {
        Err(ss3::Error::DimensionMismatch(format!("estimate is {:?}, truth is {dims:?}", m.shape())).into())
    }
}

#[derive(Serialize)]
struct MetricsReport {
    schema: &'static str,
    space: &'static str,
    #[serde(flatten)]
    metrics: DiscoveryMetrics,
}

pub fn metrics(a: MetricsArgs) -> Result<()> {
    let t_star = load_truth(&a.truth, a.rank_tol)?;
    let (space, metrics) = match load_estimate(&a.estimate, t_star.dims(), a.rank_tol)? {
        Estimate::Tangent(t) => ("tangent", discovery_metrics(&t, &t_star)?),
        Estimate::Column(c) => ("column", column_metrics(&c, t_star.col())?),
    };
    emit(
        &MetricsReport {
            schema: REPORT_SCHEMA,
            space,
            metrics,
        },
        a.out.as_deref(),
    )
}

#[derive(Serialize)]
struct OracleBounds {
    schema: &'static str,
    oracle: bool,
    #[serde(flatten)]
    report: BoundReport,
}

/// Bounds that need no knowledge of the truth.
#[derive(Serialize)]
struct DataDrivenBounds {
    schema: &'static str,
    oracle: bool,
    mode: BoundMode,
    alpha: f64,
    q_hat: f64,
    kappa_indiv: f64,
    kappa_indiv_total: f64,
    /// q̂/α: bound on the expected dimension of the selection.
    dim_bound: f64,
    selected_dim: usize,
}

pub fn bounds(a: BoundsArgs) -> Result<()> {
    let truth = match &a.truth {
        Some(p) => Some(io::read_truth(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    let obs = load_obs(&a.input, truth.as_ref())?;
    let s = stabilize_obs(&obs, &a.estimator, &a.stability)?;
    let alpha = s.cfg.alpha;
    let (p1, p2) = obs.dims();
    let mode = match s.report.selected {
        Selected::Tangent(_) => BoundMode::Tangent,
        Selected::Column(_) => BoundMode::Column,
    };

    let Some(truth) = truth else {
        let (q_hat, kappa, kappa_total, dim) = match (&s.report.selected, &s.avg) {
            (Selected::Tangent(t), Some(avg)) => {
                let q = avg.trace();
                let k = kappa_indiv_estimate(avg)?.kappa;
                (q, k, kappa_indiv_bound(q, p1, p2, k, alpha)?, t.dim())
            }
            (c, _) => {
                let spaces = s.bags.col_spaces();
                let q = spaces.iter().map(|x| x.rank() as f64).sum::<f64>() / spaces.len() as f64;
                let k = kappa_indiv_column(&spaces)?.kappa;
                (q, k, kappa_indiv_bound_column(q, p1, k, alpha)?, c.rank())
            }
        };
        return emit(
            &DataDrivenBounds {
                schema: REPORT_SCHEMA,
                oracle: false,
                mode,
                alpha,
                q_hat,
                kappa_indiv: kappa,
                kappa_indiv_total: kappa_total,
                dim_bound: dim_t_bound(q_hat, alpha)?,
                selected_dim: dim,
            },
            a.out.as_deref(),
        );
    };

    let Some(model_path) = &a.data_model else {
        return Err(config_error("--truth needs --data-model (model.json from generate)"));
    };
    let model: DataModel = io::read_json(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let basis_mode = match a.basis {
        BasisArg::Independent => BasisMode::BasisIndependent,
        BasisArg::Dependent => BasisMode::BasisDependent,
    };
    let ft = f_term(
        &truth,
        &s.cfg.estimator,
        &model,
        mode,
        basis_mode,
        &FBasis::SingularVectors,
        a.mc_reps,
        derive(a.estimator.seed, FTERM),
    )?;
    let report = bound_report(&ft, &truth, &s.report.selected, &s.bags, alpha)?;
    emit(
        &OracleBounds {
            schema: REPORT_SCHEMA,
            oracle: true,
            report,
        },
        a.out.as_deref(),
    )
}

/// Preset defaults, then the config file, then flags.
fn resolve_experiment(a: &ExperimentArgs) -> Result<ExperimentConfig> {
    let mut v: Value = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| ss3::Error::Parse(format!("{}: {e}", p.display())))?
        }
        None => json!({}),
    };
    let Some(obj) = v.as_object_mut() else {
        return Err(ss3::Error::Parse("experiment config must be a JSON object".into()).into());
    };
    match (a.preset, obj.get("experiment").and_then(Value::as_str)) {
        (Some(p), Some(s)) if s.parse::<ss3::experiment::Preset>()? != p => {
            return Err(config_error(format!("--preset {p} conflicts with config experiment {s:?}")));
        }
        (Some(p), _) => {
            obj.insert("experiment".into(), json!(p.name()));
        }
        (None, Some(_)) => {}
        (None, None) => return Err(config_error("give --preset or a --config naming an experiment")),
    }
    if let Some(t) = a.trials {
        obj.insert("trials".into(), json!(t));
    }
    if let Some(s) = a.seed {
        obj.insert("seed".into(), json!(s));
    }
    if let Some(al) = &a.alpha {
        obj.insert("alpha".into(), json!(al));
    }
    if let Some(b) = a.bags {
        obj.insert("bags".into(), json!(b));
    }
    if let Some(m) = a.mode {
        obj.insert("mode".into(), serde_json::to_value(SelectionMode::from(m))?);
    }
    if let Some(s) = &a.snr {
        obj.insert("snr".into(), json!(s));
    }
    if let Some(l) = a.lambda {
        obj.insert("lambdas".into(), json!([l]));
    }
    let mut est = serde_json::Map::new();
    if let Some(e) = a.estimator {
        est.insert("kind".into(), serde_json::to_value(EstimatorKind::from(e))?);
    }
    if let Some(k) = a.k {
        est.insert("k".into(), json!(k));
    }
    if !est.is_empty() {
        match obj.get_mut("estimator").and_then(Value::as_object_mut) {
            Some(e) => e.extend(est),
            None => {
                obj.insert("estimator".into(), Value::Object(est));
            }
        }
    }
    if let Some(o) = &a.out {
        obj.insert("output_dir".into(), json!(o));
    }
    let mut cfg = ExperimentConfig::from_value(v)?;
    if cfg.output_dir.is_none() {
        cfg.output_dir = Some(PathBuf::from("out").join(cfg.experiment.name()));
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = resolve_experiment(&a)?;
    if a.dry_run {
        return emit(&cfg, None);
    }
    for &al in &cfg.alpha {
        warn_alpha(al);
    }
    let out = run_experiment(&cfg)?;
    let dir = cfg.output_dir.as_ref().expect("output dir resolved");
    let mut s = std::io::stdout().lock();
    writeln!(s, "{:<40} {:<6} {:>18} {:>18} {:>12}", "setting", "method", "FD", "PW", "rank")?;
    for st in &out.summary.settings {
        for (m, ms) in &st.methods {
            writeln!(
                s,
                "{:<40} {:<6} {:>9.2} ± {:<6.2} {:>9.2} ± {:<6.2} {:>6.2} ± {:<4.2}",
                st.info.setting, m, ms.fd.mean, ms.fd.sd, ms.pw.mean, ms.pw.sd, ms.rank.mean, ms.rank.sd
            )?;
        }
    }
    writeln!(s, "summary: {}", dir.join("summary.json").display())?;
    Ok(())
}
