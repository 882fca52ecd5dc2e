use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{fit, EstimatorConfig, EstimatorKind, ObservationSet};
use crate::metrics::{column_metrics, discovery_metrics};
use crate::numeric::{self, CompensatedSum};
use crate::rng;
use crate::sampling::{gen_completion, gen_denoise, gen_denoise_mean, gen_linear, SyntheticTruth};

use super::{BasisMode, BoundMode};

/// How a dataset of a given size is drawn around L⋆.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DataModel {
    Completion { m: usize, sigma: f64 },
    Denoise { n: usize, delta: f64, gamma: f64 },
    Linear { n: usize, sigma: f64 },
}

impl DataModel {
    pub fn generate(&self, truth: &SyntheticTruth, seed: u64) -> Result<ObservationSet> {
        match *self {
            DataModel::Completion { m, sigma } => gen_completion(truth, m, sigma, seed),
            DataModel::Denoise { n, delta, gamma } => gen_denoise(truth, n, delta, gamma, seed),
            DataModel::Linear { n, sigma } => gen_linear(truth, n, sigma, seed),
        }
    }

    /// The same model with half the observations.
    pub fn half(&self) -> Result<DataModel> {
        let halve = |n: usize| {
            if n < 2 {
                Err(invalid("need at least two observations to halve"))
            } else {
                Ok(n / 2)
            }
        };
        Ok(match *self {
            DataModel::Completion { m, sigma } => DataModel::Completion { m: halve(m)?, sigma },
            DataModel::Denoise { n, delta, gamma } => DataModel::Denoise {
                n: halve(n)?,
                delta,
                gamma,
            },
            DataModel::Linear { n, sigma } => DataModel::Linear { n: halve(n)?, sigma },
        })
    }
}

/// Orthonormal basis {Mᵢ} of T⋆⊥ (or C⋆⊥) for the basis-dependent F.
#[derive(Clone, Debug, Default)]
pub enum FBasis {
    /// Mᵢⱼ = U⋆_{:,r+i} V⋆_{:,r+j}ᵀ, or U⋆_{:,r+i} for column spaces.
    #[default]
    SingularVectors,
    /// Caller-supplied matrices (p1×1 for column spaces).
    Custom(Vec<DMatrix<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FTerm {
    pub f: f64,
    pub basis_mode: BasisMode,
    pub mode: BoundMode,
    /// E[dim] of a half-size estimate.
    pub q: f64,
    pub q_sd: f64,
    /// E[FD] of a half-size estimate.
    pub mean_fd: f64,
    pub mc_reps: usize,
}

/// What one Monte-Carlo replicate contributes.
struct Draw {
    dim: f64,
    fd: f64,
    /// Per-basis energies: rank-one pieces (a, b) for the singular-vector
    /// basis, or ‖P(Mᵢ)‖_F for a custom basis.
    col: DVector<f64>,
    row: Option<DVector<f64>>,
}

/// F from `mc_reps` independent half-size datasets:
/// basis-independent (E√FD)², basis-dependent Σᵢ (E‖P_T̂(Mᵢ)‖_F)².
/// For the singular-vector basis ‖P_T̂(cwᵀ)‖_F² = a + b − ab with
/// a = ‖Ĉᵀc‖², b = ‖R̂ᵀw‖².
#[allow(clippy::too_many_arguments)]
pub fn f_term(
    truth: &SyntheticTruth,
    estimator: &EstimatorConfig,
    model: &DataModel,
    mode: BoundMode,
    basis_mode: BasisMode,
    basis: &FBasis,
    mc_reps: usize,
    seed: u64,
) -> Result<FTerm> {
    if mc_reps < 2 {
        return Err(invalid("F needs at least two Monte-Carlo replicates"));
    }
    estimator.validate()?;
    let half = model.half()?;
    let cperp = truth.col_complement();
    let wperp = truth.row_complement();
    if let FBasis::Custom(ms) = basis {
        let (p1, p2) = truth.dims();
        let want = if mode == BoundMode::Column { (p1, 1) } else { (p1, p2) };
        if ms.iter().any(|m| m.shape() != want) {
            return Err(invalid(format!("basis matrices must be {}×{}", want.0, want.1)));
        }
    }

    let draws: Vec<Result<Draw>> = (0..mc_reps)
        .into_par_iter()
        .map(|k| {
            let s = rng::derive(seed, k as u64);
            let obs = half_dataset(truth, estimator, &half, s)?;
            let mut cfg = estimator.clone();
            cfg.seed = rng::derive(estimator.seed, k as u64);
            let est = fit(&obs, &cfg, None)?;
            match mode {
                BoundMode::Tangent => {
                    let t = est.tangent()?;
                    let fd = discovery_metrics(&t, &truth.t_star)?.fd;
                    let (col, row) = match basis {
                        FBasis::SingularVectors => (
                            coverage(t.col().basis(), &cperp),
                            Some(coverage(t.row().basis(), &wperp)),
                        ),
                        FBasis::Custom(ms) => {
                            let e = ms.iter().map(|m| t.apply(m).map(|x| x.norm())).collect::<Result<Vec<_>>>()?;
                            (DVector::from_vec(e), None)
                        }
                    };
                    Ok(Draw {
                        dim: t.dim() as f64,
                        fd,
                        col,
                        row,
                    })
                }
                BoundMode::Column => {
                    let fd = column_metrics(&est.col, truth.t_star.col())?.fd;
                    let col = match basis {
                        FBasis::SingularVectors => coverage(est.col.basis(), &cperp),
                        FBasis::Custom(ms) => DVector::from_iterator(ms.len(), ms.iter().map(|m| est.col.project(m).norm())),
                    };
                    Ok(Draw {
                        dim: est.col.rank() as f64,
                        fd,
                        col,
                        row: None,
                    })
                }
            }
        })
        .collect();

    let mut ok = Vec::with_capacity(mc_reps);
    for (k, d) in draws.into_iter().enumerate() {
        match d {
            Ok(d) => ok.push(d),
            Err(e) if e.is_config() => return Err(e),
            Err(e) => log::warn!("Monte-Carlo replicate {k} dropped: {e}"),
        }
    }
    if 2 * ok.len() < mc_reps || ok.len() < 2 {
        return Err(Error::Numerical(format!(
            "only {} of {mc_reps} Monte-Carlo replicates succeeded",
            ok.len()
        )));
    }
    let n = ok.len() as f64;
    let dims: Vec<f64> = ok.iter().map(|d| d.dim).collect();
    let (q, q_sd) = numeric::mean_sd(&dims);
    let mean_fd = numeric::compensated_sum(ok.iter().map(|d| d.fd)) / n;

    let f = match basis_mode {
        BasisMode::BasisIndependent => {
            let m = numeric::compensated_sum(ok.iter().map(|d| d.fd.max(0.0).sqrt())) / n;
            m * m
        }
        BasisMode::BasisDependent => match (basis, mode) {
            (FBasis::SingularVectors, BoundMode::Tangent) => {
                let (kc, kr) = (cperp.ncols(), wperp.ncols());
                let mut acc = vec![CompensatedSum::new(); kc * kr];
                for d in &ok {
                    let row = d.row.as_ref().expect("row energies");
                    for j in 0..kr {
                        let b = row[j];
                        for i in 0..kc {
                            let a = d.col[i];
                            acc[j * kc + i].add((a + b - a * b).max(0.0).sqrt());
                        }
                    }
                }
                numeric::compensated_sum(acc.iter().map(|s| (s.value() / n).powi(2)))
            }
            (FBasis::SingularVectors, BoundMode::Column) => {
                sum_of_squared_means(ok.iter().map(|d| d.col.map(|a| a.max(0.0).sqrt())), n)
            }
            (FBasis::Custom(_), _) => sum_of_squared_means(ok.iter().map(|d| d.col.clone()), n),
        },
    };
    Ok(FTerm {
        f,
        basis_mode,
        mode,
        q,
        q_sd,
        mean_fd,
        mc_reps: ok.len(),
    })
}

/// ‖Bᵀcᵢ‖² for every column cᵢ of `perp`.
fn coverage(basis: &DMatrix<f64>, perp: &DMatrix<f64>) -> DVector<f64> {
    let g = basis.tr_mul(perp);
    DVector::from_iterator(g.ncols(), g.column_iter().map(|c| c.norm_squared()))
}

fn sum_of_squared_means<I: Iterator<Item = DVector<f64>>>(energies: I, n: f64) -> f64 {
    let mut acc: Vec<CompensatedSum> = Vec::new();
    for e in energies {
        if acc.is_empty() {
            acc = vec![CompensatedSum::new(); e.len()];
        }
        for (s, x) in acc.iter_mut().zip(e.iter()) {
            s.add(*x);
        }
    }
    numeric::compensated_sum(acc.iter().map(|s| (s.value() / n).powi(2)))
}

/// A half-size dataset. The spectral estimator only sees the replicate mean,
/// so for denoising it is drawn directly in distribution.
fn half_dataset(truth: &SyntheticTruth, estimator: &EstimatorConfig, half: &DataModel, seed: u64) -> Result<ObservationSet> {
    match (*half, estimator.kind) {
        (DataModel::Denoise { n, delta, gamma }, EstimatorKind::Spectral) => {
            ObservationSet::replicate(vec![gen_denoise_mean(truth, n, delta, gamma, seed)?])
        }
        _ => half.generate(truth, seed),
    }
}
