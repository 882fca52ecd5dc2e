//! False discovery, power and misalignment of tangent-space estimates.
//!
//! All quantities are per-realization traces; expectations are Monte-Carlo
//! averages taken by the caller.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Error, Result};
use crate::linalg::words::{tangent_word_trace, TangentFactor};
use crate::linalg::{op_compose, MatrixOperator, Subspace, TangentSpace};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryMetrics {
    pub fd: f64,
    pub pw: f64,
    pub fdr: f64,
    pub dim_estimate: usize,
    pub dim_truth: usize,
    pub dim_truth_complement: usize,
}

/// trace(P_T1 P_T2) from the nine-term expansion of the product of
/// P_T = P_C⊗I + I⊗P_R − P_C⊗P_R.
pub fn tangent_overlap(t1: &TangentSpace, t2: &TangentSpace) -> Result<f64> {
    t1.check_same_dims(t2)?;
    let (p1, p2) = t1.dims();
    let (p1, p2) = (p1 as f64, p2 as f64);
    let c = t1.col().overlap(t2.col())?;
    let r = t1.row().overlap(t2.row())?;
    let (c1, r1) = (t1.rank() as f64, t1.rank() as f64);
    let (c2, r2) = (t2.rank() as f64, t2.rank() as f64);
    Ok(c * p2 + c1 * r2 - c * r2 + c2 * r1 + p1 * r - c2 * r - c * r1 - c1 * r + c * r)
}

/// FD = trace(P_T̂ P_{T⋆⊥}), PW = trace(P_T̂ P_T⋆), FDR = FD / dim T̂.
pub fn discovery_metrics(t_hat: &TangentSpace, t_star: &TangentSpace) -> Result<DiscoveryMetrics> {
    t_hat.check_same_dims(t_star)?;
    let (p1, p2) = t_hat.dims();
    let rs = t_star.rank() as f64;
    // ĉ = tr(P_Ĉ P_{C⋆⊥}) = rank(Ĉ) − tr(P_Ĉ P_C⋆), likewise for rows.
    let ch = (t_hat.rank() as f64 - t_hat.col().overlap(t_star.col())?).max(0.0);
    let rh = (t_hat.rank() as f64 - t_hat.row().overlap(t_star.row())?).max(0.0);
    let fd = ch * (p2 as f64 - rs) + (p1 as f64 - rs) * rh - ch * rh;
    let fd = fd.max(0.0);
    let pw = tangent_overlap(t_hat, t_star)?.max(0.0);
    let dim = t_hat.dim();
    Ok(DiscoveryMetrics {
        fd,
        pw,
        fdr: ratio(fd, dim),
        dim_estimate: dim,
        dim_truth: t_star.dim(),
        dim_truth_complement: t_star.complement_dim(),
    })
}

/// Column-space analogue in subspace units: FD = tr(P_Ĉ P_{C⋆⊥}).
pub fn column_metrics(c_hat: &Subspace, c_star: &Subspace) -> Result<DiscoveryMetrics> {
    let pw = c_hat.overlap(c_star)?.max(0.0);
    let fd = (c_hat.rank() as f64 - pw).max(0.0);
    Ok(DiscoveryMetrics {
        fd,
        pw,
        fdr: ratio(fd, c_hat.rank()),
        dim_estimate: c_hat.rank(),
        dim_truth: c_star.rank(),
        dim_truth_complement: c_star.ambient_dim() - c_star.rank(),
    })
}

fn ratio(fd: f64, dim: usize) -> f64 {
    if dim == 0 {
        0.0
    } else {
        (fd / dim as f64).clamp(0.0, 1.0)
    }
}

/// μ = 1 − trace(P_T1 P_T2) / max(dim T1, dim T2).
pub fn misalignment_mu(t1: &TangentSpace, t2: &TangentSpace) -> Result<f64> {
    t1.check_same_dims(t2)?;
    let d = t1.dim().max(t2.dim());
    if d == 0 {
        return Err(Error::Undefined("misalignment of two zero-dimensional tangent spaces".into()));
    }
    Ok((1.0 - tangent_overlap(t1, t2)? / d as f64).clamp(0.0, 1.0))
}

/// ‖[A, B]‖_F for projector operators A, B, via 2·tr(AB) − 2·tr(ABAB).
pub fn commutator_frobenius(a: &MatrixOperator, b: &MatrixOperator) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(mismatch(format!("operators on {:?} and {:?}", a.dims(), b.dims())));
    }
    let ab = op_compose(a, b)?;
    let abab = op_compose(&ab, &ab)?;
    Ok((2.0 * ab.trace() - 2.0 * abab.trace()).max(0.0).sqrt())
}

/// ‖[P_T1, P_T2]‖_F using low-rank traces only.
pub fn tangent_commutator_frobenius(t1: &TangentSpace, t2: &TangentSpace) -> Result<f64> {
    use TangentFactor::Tangent;
    let ab = tangent_word_trace(&[Tangent(t1), Tangent(t2)])?;
    let abab = tangent_word_trace(&[Tangent(t1), Tangent(t2), Tangent(t1), Tangent(t2)])?;
    Ok((2.0 * ab - 2.0 * abab).max(0.0).sqrt())
}

/// ‖[P_T, P_span(u vᵀ)]‖_F = √(2t(1 − t)) with t = ‖P_T(u vᵀ)‖_F².
pub fn tangent_span_commutator(t: &TangentSpace, u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    let (p1, p2) = t.dims();
    if u.len() != p1 || v.len() != p2 {
        return Err(mismatch(format!(
            "span direction of sizes ({}, {}) for tangent space on {p1}×{p2}",
            u.len(),
            v.len()
        )));
    }
    let (nu, nv) = (u.norm(), v.norm());
    if !(nu > 0.0 && nv > 0.0) {
        return Err(invalid("span direction must be nonzero"));
    }
    let (inside, outside) = t.rank_one_split((u / nu).as_slice(), (v / nv).as_slice());
    Ok((2.0 * inside * outside).sqrt())
}

pub fn span_commutator_from_energy(t: f64) -> f64 {
    (2.0 * t * (1.0 - t)).max(0.0).sqrt()
}

/// Mean of per-realization metrics, for Monte-Carlo FD/PW estimates.
pub fn average_metrics(ms: &[DiscoveryMetrics]) -> Option<(f64, f64)> {
    if ms.is_empty() {
        return None;
    }
    let n = ms.len() as f64;
    let fd = crate::numeric::compensated_sum(ms.iter().map(|m| m.fd)) / n;
    let pw = crate::numeric::compensated_sum(ms.iter().map(|m| m.pw)) / n;
    Some((fd, pw))
}

/// Convenience: FD/PW of the tangent space of an estimated matrix.
pub fn matrix_metrics(estimate: &DMatrix<f64>, t_star: &TangentSpace, rank_tol: f64) -> Result<DiscoveryMetrics> {
    let t = crate::estimators::extract_tangent(estimate, rank_tol)?;
    discovery_metrics(&t, t_star)
}
