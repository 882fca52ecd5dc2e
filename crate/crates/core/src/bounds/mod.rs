//! Computable false-discovery bounds for stable tangent spaces (and their
//! column-space analogues), plus the data-driven quantities that feed them.

mod kappa;
mod montecarlo;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::estimators::EstimatorConfig;
use crate::sampling::SyntheticTruth;
use crate::stability::{BagEstimates, Selected};

pub use kappa::{
    heuristic_alignment_diag, kappa_bag, kappa_indiv_column, kappa_indiv_estimate, AlignmentDiagnostic,
    KappaIndiv,
};
pub use montecarlo::{f_term, DataModel, FBasis, FTerm};

/// Default number of half-size datasets for the Monte-Carlo F term.
pub const DEFAULT_MC_REPS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BasisMode {
    BasisDependent,
    #[default]
    BasisIndependent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    Tangent,
    Column,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub mode: BoundMode,
    pub basis_mode: BasisMode,
    pub alpha: f64,
    #[serde(rename = "F")]
    pub f: f64,
    pub kappa_bag: f64,
    /// 2(1 − α)·dim of the selected space.
    pub slack_term: f64,
    pub fd_bound_total: f64,
    pub commuting_total: f64,
    /// Monte-Carlo E[dim] of a half-size estimate.
    pub q: f64,
    /// trace(P_avg) from the bags.
    pub q_hat: f64,
    pub kappa_indiv: f64,
    pub kappa_indiv_total: f64,
    /// Monte-Carlo E[FD] of a single half-size estimate.
    pub half_sample_fd: f64,
    pub selected_dim: usize,
    pub mc_reps: usize,
    /// Complementary pairs that entered κ_bag.
    pub pairs: usize,
}

fn check_alpha_half(alpha: f64) -> Result<()> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(invalid(format!("the bound needs alpha in (1/2, 1), got {alpha}")));
    }
    Ok(())
}

/// F + (2q/α)(1 − α + √(1 − α)).
pub fn commuting_bound(f: f64, q: f64, alpha: f64) -> Result<f64> {
    check_unit(alpha)?;
    if !(q >= 0.0) || !(f >= 0.0) {
        return Err(invalid("F and q must be non-negative"));
    }
    Ok(f + 2.0 * q / alpha * (1.0 - alpha + (1.0 - alpha).sqrt()))
}

/// E[dim T] ≤ q/α.
pub fn dim_t_bound(q: f64, alpha: f64) -> Result<f64> {
    check_unit(alpha)?;
    Ok(q / alpha)
}

/// κ_bag ≤ 2√(1 − α)·E[dim T].
pub fn kappa_bag_bound(dim_t: f64, alpha: f64) -> Result<f64> {
    check_unit(alpha)?;
    Ok(2.0 * (1.0 - alpha).sqrt() * dim_t)
}

fn check_unit(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// f(κ) = N κ² + 2qκ with N the number of ambient coordinates (p1p2 for
/// tangent spaces, p1 for column spaces).
pub fn f_kappa(q: f64, n: f64, kappa: f64) -> f64 {
    n * kappa * kappa + 2.0 * q * kappa
}

/// q²/(p1p2) + f(κ) + (2q/α)(1 − α + √(1 − α)).
pub fn kappa_indiv_bound(q: f64, p1: usize, p2: usize, kappa_indiv: f64, alpha: f64) -> Result<f64> {
    kappa_indiv_generic(q, (p1 * p2) as f64, kappa_indiv, alpha)
}

/// Column-space variant: q²/p1 + p1κ² + 2qκ + (2q/α)(1 − α + √(1 − α)).
pub fn kappa_indiv_bound_column(q: f64, p1: usize, kappa_indiv: f64, alpha: f64) -> Result<f64> {
    kappa_indiv_generic(q, p1 as f64, kappa_indiv, alpha)
}

fn kappa_indiv_generic(q: f64, n: f64, kappa: f64, alpha: f64) -> Result<f64> {
    if !(q >= 0.0) || !(kappa >= 0.0) || !(n > 0.0) {
        return Err(invalid("q, κ must be non-negative and the ambient size positive"));
    }
    commuting_bound(q * q / n + f_kappa(q, n, kappa), q, alpha)
}

/// Σ_i P[null i selected] / (2α − 1), valid when all projectors commute.
pub fn variable_selection_bound(null_selection_probs: &[f64], alpha: f64) -> Result<f64> {
    check_alpha_half(alpha)?;
    if null_selection_probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(invalid("selection probabilities must lie in [0, 1]"));
    }
    Ok(null_selection_probs.iter().sum::<f64>() / (2.0 * alpha - 1.0))
}

/// Combines a precomputed F term with the bag-dependent quantities for one
/// selection. F depends only on the estimator and data model, so one
/// Monte-Carlo run can serve every α.
pub fn bound_report(
    fterm: &FTerm,
    truth: &SyntheticTruth,
    selected: &Selected,
    bags: &BagEstimates,
    alpha: f64,
) -> Result<BoundReport> {
    check_alpha_half(alpha)?;
    let kb = kappa_bag(selected, bags, truth, fterm.basis_mode)?;
    let (p1, p2) = truth.dims();
    let (mode, selected_dim, q_hat, kappa_indiv, kappa_total) = match selected {
        Selected::Tangent(t) => {
            let tangents = bags.tangents()?;
            let avg = crate::stability::average_projectors(tangents)?;
            let ki = kappa_indiv_estimate(&avg)?;
            (
                BoundMode::Tangent,
                t.dim(),
                avg.trace(),
                ki.kappa,
                kappa_indiv_bound(fterm.q, p1, p2, ki.kappa, alpha)?,
            )
        }
        Selected::Column(c) => {
            let spaces = bags.col_spaces();
            let ki = kappa_indiv_column(&spaces)?;
            let q_hat = spaces.iter().map(|s| s.rank() as f64).sum::<f64>() / spaces.len() as f64;
            (
                BoundMode::Column,
                c.rank(),
                q_hat,
                ki.kappa,
                kappa_indiv_bound_column(fterm.q, p1, ki.kappa, alpha)?,
            )
        }
    };
    if (mode == BoundMode::Column) != (fterm.mode == BoundMode::Column) {
        return Err(invalid("F term and selection disagree on tangent vs column mode"));
    }
    let slack = 2.0 * (1.0 - alpha) * selected_dim as f64;
    Ok(BoundReport {
        mode,
        basis_mode: fterm.basis_mode,
        alpha,
        f: fterm.f,
        kappa_bag: kb.value,
        slack_term: slack,
        fd_bound_total: fterm.f + kb.value + slack,
        commuting_total: commuting_bound(fterm.f, fterm.q, alpha)?,
        q: fterm.q,
        q_hat,
        kappa_indiv,
        kappa_indiv_total: kappa_total,
        half_sample_fd: fterm.mean_fd,
        selected_dim,
        mc_reps: fterm.mc_reps,
        pairs: kb.pairs,
    })
}

/// All terms of the FD bound for one selection: Monte-Carlo F over `mc_reps`
/// half-size datasets from `model`, κ_bag from the bag estimates, and the
/// slack term from the realized dimension of the selection.
#[allow(clippy::too_many_arguments)]
pub fn fd_bound_terms(
    truth: &SyntheticTruth,
    estimator: &EstimatorConfig,
    model: &DataModel,
    alpha: f64,
    basis_mode: BasisMode,
    mc_reps: usize,
    seed: u64,
    selected: &Selected,
    bags: &BagEstimates,
) -> Result<BoundReport> {
    check_alpha_half(alpha)?;
    let mode = match selected {
        Selected::Tangent(_) => BoundMode::Tangent,
        Selected::Column(_) => BoundMode::Column,
    };
    let fterm = f_term(truth, estimator, model, mode, basis_mode, &FBasis::SingularVectors, mc_reps, seed)?;
    bound_report(&fterm, truth, selected, bags, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn commuting_bound_arithmetic() {
        let b = commuting_bound(10.0, 100.0, 0.75).unwrap();
        assert!((b - 210.0).abs() < 1e-12);
        assert_eq!(commuting_bound(3.0, 0.0, 0.6).unwrap(), 3.0);
        assert!((commuting_bound(3.0, 50.0, 1.0).unwrap() - 3.0).abs() < 1e-12);
        assert!(commuting_bound(3.0, 50.0, 0.0).is_err());
    }

    #[test]
    fn kappa_indiv_bound_limits() {
        let b = kappa_indiv_bound(20.0, 10, 10, 0.0, 1.0).unwrap();
        assert!((b - 4.0).abs() < 1e-12);
        let c = kappa_indiv_bound_column(20.0, 10, 0.0, 1.0).unwrap();
        assert!((c - 40.0).abs() < 1e-12);
    }

    #[test]
    fn variable_selection_arithmetic() {
        assert!((variable_selection_bound(&[0.1; 10], 0.6).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(variable_selection_bound(&[0.0; 4], 0.9).unwrap(), 0.0);
        assert!(variable_selection_bound(&[0.1], 0.5).is_err());
        assert!(variable_selection_bound(&[1.1], 0.7).is_err());
    }
}
