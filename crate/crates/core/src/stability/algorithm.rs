use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{Subspace, TangentSpace};
use crate::numeric;

use super::membership::{gram_meets_level, RotatedBags, MEMBERSHIP_SLACK};
use super::AveragedProjectors;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Largest leading-eigenspace tangent space in the α-stable set.
    #[default]
    Tangent,
    /// Largest rank whose row and column average eigenvalues both reach α.
    TangentModified,
    /// Thresholded column-space average.
    Column,
}

/// How much of the σ_min curve to materialize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CurveMode {
    /// r = 0, r_S3 and r_S3 + 1 only.
    #[default]
    Boundary,
    /// Every r from 0 up to the first rank that can no longer be stable.
    Full,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Selected {
    Tangent(TangentSpace),
    Column(Subspace),
}

impl Selected {
    pub fn rank(&self) -> usize {
        match self {
            Selected::Tangent(t) => t.rank(),
            Selected::Column(s) => s.rank(),
        }
    }

    pub fn tangent(&self) -> Option<&TangentSpace> {
        match self {
            Selected::Tangent(t) => Some(t),
            Selected::Column(_) => None,
        }
    }

    pub fn column_space(&self) -> &Subspace {
        match self {
            Selected::Tangent(t) => t.col(),
            Selected::Column(s) => s,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// trace(P_avg): mean dimension of the bag estimates.
    pub trace_p_avg: f64,
    /// Plug-in estimate of E[dim T̂] from the bags; equals trace(P_avg).
    pub q_hat: f64,
    pub bags: usize,
}

#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub mode: SelectionMode,
    pub selected: Selected,
    pub alpha: f64,
    pub r_selected: usize,
    /// (r, σ_min) pairs in increasing r.
    pub sigma_min_curve: Vec<(usize, f64)>,
    pub membership_level: f64,
    pub diagnostics: Diagnostics,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

fn diagnostics(avg: &AveragedProjectors) -> Diagnostics {
    let tr = avg.trace();
    Diagnostics {
        trace_p_avg: tr,
        q_hat: tr,
        bags: avg.len(),
    }
}

fn leading_tangent(wc: &DMatrix<f64>, wr: &DMatrix<f64>, r: usize) -> TangentSpace {
    TangentSpace::new(
        Subspace::from_orthonormal_unchecked(wc.columns(0, r).into_owned()),
        Subspace::from_orthonormal_unchecked(wr.columns(0, r).into_owned()),
    )
    .expect("equal ranks by construction")
}

pub fn select_stable(avg: &AveragedProjectors, alpha: f64) -> Result<StabilityReport> {
    select_stable_with(avg, alpha, CurveMode::Boundary)
}

/// Leading-eigenspace candidates T(r) are nested, so σ_min(r) is
/// non-increasing and the largest stable r is found by bisection. Two
/// eigenvalue bounds bracket the search: a Rayleigh quotient on u_r z_minᵀ
/// shows σ_min(r) ≤ λ^C_r + λ^R_min (and symmetrically), and when both
/// λ^C_r, λ^R_r ≥ 1 − (1−α)/4 the modified-algorithm guarantee already
/// gives σ_min(r) ≥ α. Feasibility inside the bracket is a Cholesky test.
pub fn select_stable_with(avg: &AveragedProjectors, alpha: f64, curve: CurveMode) -> Result<StabilityReport> {
    check_alpha(alpha)?;
    let (p1, p2) = avg.dims();
    let rmax = p1.min(p2);
    let (lc, wc) = numeric::sym_eigen_desc(&avg.avg_col);
    let (lr, wr) = numeric::sym_eigen_desc(&avg.avg_row);
    let lc_min = lc[p1 - 1];
    let lr_min = lr[p2 - 1];
    let level = alpha - MEMBERSHIP_SLACK;

    let r_hi = (1..=rmax)
        .take_while(|&r| lc[r - 1] + lr_min >= level && lr[r - 1] + lc_min >= level)
        .last()
        .unwrap_or(0);
    let sure = 1.0 - (1.0 - alpha) / 4.0;
    let r_lo = (1..=r_hi)
        .take_while(|&r| lc[r - 1].min(lr[r - 1]) >= sure)
        .last()
        .unwrap_or(0);

    let rotated = RotatedBags::new(&wc, &wr, avg);
    let sigma = |r: usize| -> f64 {
        if r == 0 {
            1.0
        } else {
            numeric::min_sym_eigenvalue(&rotated.gram(r))
        }
    };

    let (r_sel, curve_pts) = match curve {
        CurveMode::Full => {
            let top = rmax.min(r_hi + 1);
            let pts: Vec<(usize, f64)> = (0..=top).map(|r| (r, sigma(r))).collect();
            let r_sel = pts
                .iter()
                .take_while(|(_, s)| *s >= level)
                .last()
                .map(|&(r, _)| r)
                .unwrap_or(0);
            (r_sel, pts)
        }
        CurveMode::Boundary => {
            let mut lo = r_lo;
            let mut hi = r_hi;
            while lo < hi {
                let mid = (lo + hi + 1) / 2;
                if gram_meets_level(&rotated.gram(mid), alpha) {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            let mut r_sel = lo;
            let mut s_sel = sigma(r_sel);
            if s_sel < level {
                // Only reachable if the lower bracket was too optimistic
                // numerically; redo the search from the bottom.
                log::warn!("stability bracket at r = {r_sel} failed verification; rescanning");
                let (mut lo, mut hi) = (0, r_sel - 1);
                while lo < hi {
                    let mid = (lo + hi + 1) / 2;
                    if gram_meets_level(&rotated.gram(mid), alpha) {
                        lo = mid;
                    } else {
                        hi = mid - 1;
                    }
                }
                r_sel = lo;
                s_sel = sigma(r_sel);
            }
            let mut pts = vec![(0, 1.0)];
            if r_sel > 0 {
                pts.push((r_sel, s_sel));
            }
            if r_sel < rmax {
                pts.push((r_sel + 1, sigma(r_sel + 1)));
            }
            (r_sel, pts)
        }
    };

    Ok(StabilityReport {
        mode: SelectionMode::Tangent,
        selected: Selected::Tangent(leading_tangent(&wc, &wr, r_sel)),
        alpha,
        r_selected: r_sel,
        sigma_min_curve: curve_pts,
        membership_level: alpha,
        diagnostics: diagnostics(avg),
    })
}

/// Exact σ_min(P_T(r) P_avg P_T(r)) for the leading-eigenspace tangent
/// spaces r = 0..=max_rank (capped at min(p1, p2)).
pub fn sigma_min_curve(avg: &AveragedProjectors, max_rank: usize) -> Vec<(usize, f64)> {
    let (p1, p2) = avg.dims();
    let (_, wc) = numeric::sym_eigen_desc(&avg.avg_col);
    let (_, wr) = numeric::sym_eigen_desc(&avg.avg_row);
    let rotated = RotatedBags::new(&wc, &wr, avg);
    (0..=max_rank.min(p1.min(p2)))
        .map(|r| {
            let s = if r == 0 { 1.0 } else { numeric::min_sym_eigenvalue(&rotated.gram(r)) };
            (r, s)
        })
        .collect()
}

/// The rank-r leading-eigenspace tangent space with its σ_min, for
/// comparisons at a fixed rank rather than a fixed α.
pub fn rank_pinned(avg: &AveragedProjectors, r: usize) -> Result<(TangentSpace, f64)> {
    let (p1, p2) = avg.dims();
    if r > p1.min(p2) {
        return Err(invalid(format!("rank {r} exceeds min({p1}, {p2})")));
    }
    let (_, wc) = numeric::sym_eigen_desc(&avg.avg_col);
    let (_, wr) = numeric::sym_eigen_desc(&avg.avg_row);
    let s = if r == 0 {
        1.0
    } else {
        numeric::min_sym_eigenvalue(&RotatedBags::new(&wc, &wr, avg).gram(r))
    };
    Ok((leading_tangent(&wc, &wr, r), s))
}

/// Largest r with both r-th eigenvalues of the row and column averages at
/// least α. No Gram matrices are formed; the result is guaranteed to be
/// stable at level 1 − 4(1 − α) rather than α.
pub fn select_stable_modified(avg: &AveragedProjectors, alpha: f64) -> Result<StabilityReport> {
    check_alpha(alpha)?;
    let (p1, p2) = avg.dims();
    let (lc, wc) = numeric::sym_eigen_desc(&avg.avg_col);
    let (lr, wr) = numeric::sym_eigen_desc(&avg.avg_row);
    let level = alpha - MEMBERSHIP_SLACK;
    let r = (1..=p1.min(p2))
        .take_while(|&r| lc[r - 1] >= level && lr[r - 1] >= level)
        .last()
        .unwrap_or(0);
    Ok(StabilityReport {
        mode: SelectionMode::TangentModified,
        selected: Selected::Tangent(leading_tangent(&wc, &wr, r)),
        alpha,
        r_selected: r,
        sigma_min_curve: Vec::new(),
        membership_level: 1.0 - 4.0 * (1.0 - alpha),
        diagnostics: diagnostics(avg),
    })
}

/// Keeps the eigenvectors of the averaged column projector with eigenvalue at
/// least α. On the leading r eigenvectors σ_min(P_C P̄ P_C) is exactly the
/// r-th eigenvalue, which is what the curve records.
pub fn column_stability(col_spaces: &[Subspace], alpha: f64) -> Result<StabilityReport> {
    check_alpha(alpha)?;
    let Some(first) = col_spaces.first() else {
        return Err(invalid("no bag estimates to average"));
    };
    let p = first.ambient_dim();
    for s in col_spaces {
        first.check_same_ambient(s)?;
    }
    let avg = numeric::average_matrices(col_spaces.iter().map(|s| s.projector()).collect::<Vec<_>>().iter(), p, p);
    let avg = numeric::symmetrize(&avg);
    let (l, w): (DVector<f64>, DMatrix<f64>) = numeric::sym_eigen_desc(&avg);
    let level = alpha - MEMBERSHIP_SLACK;
    let r = l.iter().take_while(|&&x| x >= level).count();
    let mut curve = vec![(0, 1.0)];
    curve.extend((1..=p).map(|k| (k, l[k - 1])));
    let mean_rank = numeric::compensated_sum(col_spaces.iter().map(|s| s.rank() as f64)) / col_spaces.len() as f64;
    Ok(StabilityReport {
        mode: SelectionMode::Column,
        selected: Selected::Column(Subspace::from_orthonormal_unchecked(w.columns(0, r).into_owned())),
        alpha,
        r_selected: r,
        sigma_min_curve: curve,
        membership_level: alpha,
        diagnostics: Diagnostics {
            trace_p_avg: mean_rank,
            q_hat: mean_rank,
            bags: col_spaces.len(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::haar_subspace;
    use crate::stability::{average_projectors, stable_membership};

    fn tangent(p1: usize, p2: usize, r: usize, seed: u64) -> TangentSpace {
        TangentSpace::new(haar_subspace(p1, r, seed).unwrap(), haar_subspace(p2, r, seed + 1000).unwrap()).unwrap()
    }

    fn noisy_bags(p1: usize, p2: usize, n: usize, seed: u64) -> AveragedProjectors {
        let common = tangent(p1, p2, 2, seed);
        let bags = (0..n)
            .map(|l| {
                if l % 3 == 0 {
                    tangent(p1, p2, 1 + l % 3, seed + 1 + l as u64)
                } else {
                    common.clone()
                }
            })
            .collect();
        average_projectors(bags).unwrap()
    }

    #[test]
    fn identical_bags_are_recovered() {
        let t = tangent(6, 5, 2, 1);
        let avg = average_projectors(vec![t.clone(); 4]).unwrap();
        let rep = select_stable(&avg, 0.99).unwrap();
        assert_eq!(rep.r_selected, 2);
        let sel = rep.selected.tangent().unwrap();
        assert!((sel.col().overlap(t.col()).unwrap() - 2.0).abs() < 1e-9);
        assert!((sel.row().overlap(t.row()).unwrap() - 2.0).abs() < 1e-9);
        let m = select_stable_modified(&avg, 0.99).unwrap();
        assert_eq!(m.r_selected, 2);
    }

    #[test]
    fn disjoint_rank_one_bags_select_nothing() {
        let bags: Vec<TangentSpace> = (0..4)
            .map(|i| {
                TangentSpace::new(Subspace::coordinate(6, &[i]).unwrap(), Subspace::coordinate(6, &[i]).unwrap())
                    .unwrap()
            })
            .collect();
        let rep = select_stable(&average_projectors(bags).unwrap(), 0.9).unwrap();
        assert_eq!(rep.r_selected, 0);
        assert_eq!(rep.selected.rank(), 0);
    }

    #[test]
    fn boundary_search_agrees_with_full_scan() {
        for seed in 0..6 {
            let avg = noisy_bags(7, 6, 9, seed * 17);
            for &alpha in &[0.3, 0.5, 0.7, 0.9] {
                let a = select_stable_with(&avg, alpha, CurveMode::Boundary).unwrap();
                let b = select_stable_with(&avg, alpha, CurveMode::Full).unwrap();
                assert_eq!(a.r_selected, b.r_selected, "seed {seed} alpha {alpha}");
                for w in b.sigma_min_curve.windows(2) {
                    assert!(w[1].1 <= w[0].1 + 1e-9);
                }
                let t = a.selected.tangent().unwrap();
                let m = stable_membership(t, &avg, alpha).unwrap();
                assert!(m.member);
            }
        }
    }

    #[test]
    fn modified_output_meets_relaxed_level() {
        for seed in 0..6 {
            let avg = noisy_bags(6, 8, 7, seed * 5 + 3);
            for &alpha in &[0.6, 0.8, 0.9] {
                let rep = select_stable_modified(&avg, alpha).unwrap();
                let t = rep.selected.tangent().unwrap();
                assert!(stable_membership(t, &avg, rep.membership_level).unwrap().member);
            }
        }
    }

    #[test]
    fn column_threshold() {
        let e = |i: usize| Subspace::coordinate(3, &[i]).unwrap();
        let spaces = vec![e(0), e(0), e(0), e(1), e(0), e(1), e(1), e(2), e(0), e(0)];
        // frequencies 0.6, 0.3, 0.1
        let rep = column_stability(&spaces, 0.55).unwrap();
        assert_eq!(rep.r_selected, 1);
        assert!((rep.selected.column_space().overlap(&e(0)).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(column_stability(&spaces, 0.7).unwrap().r_selected, 0);
    }

    #[test]
    fn rejects_alpha_outside_unit_interval() {
        let avg = average_projectors(vec![tangent(3, 3, 1, 1)]).unwrap();
        assert!(select_stable(&avg, 1.0).is_err());
        assert!(select_stable_modified(&avg, 0.0).is_err());
    }
}
