//! Base low-rank estimators run on each bag, tangent extraction and
//! tangent-constrained refitting.

mod als;
mod cv;
mod observations;
mod refit;
mod spectral;
mod svt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{Subspace, TangentSpace, RANK_TOL};
use crate::numeric;

pub use als::{als_complete, AlsResult};
pub use cv::{als_lambda_max, cross_validate_svt, holdout_mse, lambda_grid, select_als_lambda, CvResult};
pub use observations::{Entry, LinearObservation, ObservationModel, ObservationSet, Observations};
pub use refit::refit;
pub use spectral::{pca_column, spectral_denoise, spectral_factors};
pub use svt::{svt_complete, svt_complete_from, svt_lambda_max, SvtResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Svt,
    Als,
    Spectral,
    PcaColumn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub lambda: f64,
    /// Rank cap for ALS, spectral and PCA estimators.
    pub k: usize,
    pub max_iters: usize,
    pub conv_tol: f64,
    pub rank_tol: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            kind: EstimatorKind::Svt,
            lambda: 1.0,
            k: 10,
            max_iters: 1000,
            conv_tol: 1e-7,
            rank_tol: RANK_TOL,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn svt(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn als(k: usize, lambda: f64) -> Self {
        Self {
            kind: EstimatorKind::Als,
            k,
            lambda,
            max_iters: 200,
            conv_tol: 1e-6,
            ..Self::default()
        }
    }

    pub fn spectral(k: usize) -> Self {
        Self {
            kind: EstimatorKind::Spectral,
            k,
            ..Self::default()
        }
    }

    pub fn pca_column(k: usize) -> Self {
        Self {
            kind: EstimatorKind::PcaColumn,
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if !(self.conv_tol > 0.0) {
            return Err(invalid("conv_tol must be positive"));
        }
        if !(self.rank_tol > 0.0) {
            return Err(invalid("rank_tol must be positive"));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(invalid("lambda must be a finite non-negative number"));
        }
        Ok(())
    }
}

/// Result of one base-estimator run reduced to what the stability
/// machinery needs.
#[derive(Clone, Debug)]
pub struct Fit {
    pub matrix: Option<DMatrix<f64>>,
    pub col: Subspace,
    /// None for column-space estimators.
    pub row: Option<Subspace>,
    pub converged: bool,
}

impl Fit {
    pub fn tangent(&self) -> Result<TangentSpace> {
        match &self.row {
            Some(row) => TangentSpace::new(self.col.clone(), row.clone()),
            None => Err(invalid("column-space estimate has no tangent space")),
        }
    }
}

/// Runs the configured estimator; `warm` seeds iterative solvers.
pub fn fit(obs: &ObservationSet, cfg: &EstimatorConfig, warm: Option<&DMatrix<f64>>) -> Result<Fit> {
    cfg.validate()?;
    match cfg.kind {
        EstimatorKind::Svt => {
            let res = svt_complete_from(obs, cfg, warm)?;
            let t = res.tangent(cfg.rank_tol);
            Ok(Fit {
                col: t.col().clone(),
                row: Some(t.row().clone()),
                matrix: Some(res.estimate),
                converged: res.converged,
            })
        }
        EstimatorKind::Als => {
            let res = als_complete(obs, cfg)?;
            let l = &res.u * res.v.transpose();
            let t = extract_tangent(&l, cfg.rank_tol)?;
            Ok(Fit {
                col: t.col().clone(),
                row: Some(t.row().clone()),
                matrix: Some(l),
                converged: res.converged,
            })
        }
        EstimatorKind::Spectral => {
            let (l, t) = spectral_factors(obs, cfg.k, cfg.rank_tol)?;
            Ok(Fit {
                col: t.col().clone(),
                row: Some(t.row().clone()),
                matrix: Some(l),
                converged: true,
            })
        }
        EstimatorKind::PcaColumn => Ok(Fit {
            col: pca_column(obs, cfg.k)?,
            row: None,
            matrix: None,
            converged: true,
        }),
    }
}

/// Tangent space at L: leading singular vectors with σ_i > rank_tol·σ_1.
pub fn extract_tangent(l: &DMatrix<f64>, rank_tol: f64) -> Result<TangentSpace> {
    let (p1, p2) = l.shape();
    if !l.iter().all(|x| x.is_finite()) {
        return Err(invalid("matrix has non-finite entries"));
    }
    if p1 == 0 || p2 == 0 || l.iter().all(|&x| x == 0.0) {
        return Ok(TangentSpace::zero(p1, p2));
    }
    let dec = numeric::svd(l)?;
    let r = numerical_rank(&dec.s, rank_tol);
    TangentSpace::new(
        Subspace::from_orthonormal_unchecked(dec.u.columns(0, r).into_owned()),
        Subspace::from_orthonormal_unchecked(dec.v.columns(0, r).into_owned()),
    )
}

pub(crate) fn numerical_rank(s: &[f64], rank_tol: f64) -> usize {
    match s.first() {
        Some(&s1) if s1 > 0.0 => s.iter().take_while(|&&x| x > rank_tol * s1).count(),
        _ => 0,
    }
}

/// Best rank-r approximation's tangent space (r clamped to the rank).
pub fn truncated_tangent(l: &DMatrix<f64>, r: usize, rank_tol: f64) -> Result<TangentSpace> {
    let (p1, p2) = l.shape();
    if l.iter().all(|&x| x == 0.0) {
        return Ok(TangentSpace::zero(p1, p2));
    }
    let dec = numeric::svd(l)?;
    let r = r.min(numerical_rank(&dec.s, rank_tol));
    TangentSpace::new(
        Subspace::from_orthonormal_unchecked(dec.u.columns(0, r).into_owned()),
        Subspace::from_orthonormal_unchecked(dec.v.columns(0, r).into_owned()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_matrix_has_zero_tangent() {
        let t = extract_tangent(&DMatrix::zeros(4, 3), RANK_TOL).unwrap();
        assert_eq!(t.rank(), 0);
        assert_eq!(t.dims(), (4, 3));
    }

    #[test]
    fn rank_one_matrix() {
        let mut g = rng::seeded(1);
        let u = rng::gaussian_matrix(&mut g, 5, 1);
        let v = rng::gaussian_matrix(&mut g, 4, 1);
        let t = extract_tangent(&(&u * v.transpose()), RANK_TOL).unwrap();
        assert_eq!(t.rank(), 1);
        let un = &u / u.norm();
        let ov = t.col().overlap(&Subspace::from_orthonormal(un).unwrap()).unwrap();
        assert!((ov - 1.0).abs() < 1e-10, "{ov} {}", t.col().basis());
    }

    #[test]
    fn tiny_singular_value_dropped() {
        let mut l = DMatrix::zeros(3, 3);
        l[(0, 0)] = 1.0;
        l[(1, 1)] = 1e-12;
        assert_eq!(extract_tangent(&l, 1e-8).unwrap().rank(), 1);
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig { max_iters: 0, ..Default::default() }.validate().is_err());
        assert!(EstimatorConfig { conv_tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(EstimatorConfig::default().validate().is_ok());
    }
}
