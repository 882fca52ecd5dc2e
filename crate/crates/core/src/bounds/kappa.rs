use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linalg::words::{tangent_word_trace, word_trace, Factor, TangentFactor};
use crate::linalg::{Subspace, TangentSpace};
use crate::metrics::span_commutator_from_energy;
use crate::numeric;
use crate::sampling::SyntheticTruth;
use crate::stability::{AveragedProjectors, BagEstimates, Selected};

use super::BasisMode;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaBag {
    pub value: f64,
    pub pairs: usize,
}

/// (2/B) Σ_pairs max over the pair of trace([P_T, P_{T̂ℓ⊥}]·[Π, P_{T̂ℓ}]),
/// with Π = P_{T⋆⊥} (basis-independent) or summed over Π = P_span(Mᵢ) for
/// the singular-vector basis Mᵢ = cᵢwⱼᵀ of T⋆⊥ (basis-dependent). Bags
/// whose partner was dropped do not enter.
pub fn kappa_bag(selected: &Selected, bags: &BagEstimates, truth: &SyntheticTruth, mode: BasisMode) -> Result<KappaBag> {
    let pairs = bags.complete_pairs();
    if pairs.is_empty() {
        return Err(Error::Undefined("no complete pair of bags".into()));
    }
    let value = match selected {
        Selected::Tangent(t) => {
            let tangents = bags.tangents()?;
            t.check_same_dims(&truth.t_star)?;
            match mode {
                BasisMode::BasisIndependent => {
                    let per_bag = tangents
                        .iter()
                        .map(|b| commutator_product_tangent(t, b, &truth.t_star))
                        .collect::<Result<Vec<_>>>()?;
                    pairs.iter().map(|&(a, b)| per_bag[a].max(per_bag[b])).sum::<f64>()
                }
                BasisMode::BasisDependent => {
                    let cperp = truth.col_complement();
                    let wperp = truth.row_complement();
                    let per_bag: Vec<DMatrix<f64>> = tangents
                        .iter()
                        .map(|b| {
                            let (ac, bc) = side_terms(&cperp, t.col(), b.col());
                            let (ar, br) = side_terms(&wperp, t.row(), b.row());
                            (ac * ar.transpose() - bc * br.transpose()) * 2.0
                        })
                        .collect();
                    pairs.iter().map(|&(a, b)| per_bag[a].zip_map(&per_bag[b], f64::max).sum()).sum::<f64>()
                }
            }
        }
        Selected::Column(c) => {
            let spaces = bags.col_spaces();
            let cstar = truth.t_star.col();
            match mode {
                BasisMode::BasisIndependent => {
                    let per_bag = spaces
                        .iter()
                        .map(|b| commutator_product_column(c, b, cstar))
                        .collect::<Result<Vec<_>>>()?;
                    pairs.iter().map(|&(a, b)| per_bag[a].max(per_bag[b])).sum::<f64>()
                }
                BasisMode::BasisDependent => {
                    let cperp = truth.col_complement();
                    let per_bag: Vec<DVector<f64>> = spaces
                        .iter()
                        .map(|b| {
                            // 2[⟨A c, B c⟩ − ‖A B c‖²] per basis vector c.
                            let bc = b.project(&cperp);
                            let ac = c.project(&cperp);
                            let abc = c.project(&bc);
                            let v: Vec<f64> = (0..cperp.ncols())
                                .map(|i| 2.0 * (ac.column(i).dot(&bc.column(i)) - abc.column(i).norm_squared()))
                                .collect();
                            DVector::from_vec(v)
                        })
                        .collect();
                    pairs.iter().map(|&(a, b)| per_bag[a].zip_map(&per_bag[b], f64::max).sum()).sum::<f64>()
                }
            }
        }
    };
    Ok(KappaBag {
        value: value / pairs.len() as f64,
        pairs: pairs.len(),
    })
}

/// trace([A, I − B]·[Π, B]) = 2 tr(ABΠ) − 2 tr(BABΠ) for A = P_T, B = P_T̂,
/// Π = P_{T⋆⊥}.
fn commutator_product_tangent(t: &TangentSpace, b: &TangentSpace, star: &TangentSpace) -> Result<f64> {
    use TangentFactor::{Complement, Tangent};
    let abp = tangent_word_trace(&[Tangent(t), Tangent(b), Complement(star)])?;
    let babp = tangent_word_trace(&[Tangent(b), Tangent(t), Tangent(b), Complement(star)])?;
    Ok(2.0 * abp - 2.0 * babp)
}

fn commutator_product_column(c: &Subspace, b: &Subspace, star: &Subspace) -> Result<f64> {
    use Factor::{Comp, Proj};
    let p = c.ambient_dim();
    let abp = word_trace(p, &[Proj(c), Proj(b), Comp(star)])?;
    let babp = word_trace(p, &[Proj(b), Proj(c), Proj(b), Comp(star)])?;
    Ok(2.0 * abp - 2.0 * babp)
}

/// For basis vectors cᵢ (columns of `perp`), x = Q̂cᵢ and Q = I − P_sel:
/// returns (xᵀQx, cᵢᵀQx). The rank-one value for Mᵢⱼ = cᵢwⱼᵀ is then
/// 2[(xᵀQx)(yᵀSy) − (cᵀQx)(wᵀSy)].
fn side_terms(perp: &DMatrix<f64>, sel: &Subspace, bag: &Subspace) -> (DVector<f64>, DVector<f64>) {
    let x = bag.project_complement(perp);
    let qx = sel.project_complement(&x);
    let k = perp.ncols();
    let a = DVector::from_fn(k, |i, _| x.column(i).dot(&qx.column(i)));
    let b = DVector::from_fn(k, |i, _| perp.column(i).dot(&qx.column(i)));
    (a, b)
}

#[derive(Clone, Debug)]
pub struct KappaIndiv {
    pub kappa: f64,
    /// Least-aligned column direction.
    pub u: DVector<f64>,
    /// Least-aligned row direction (absent for column spaces).
    pub v: Option<DVector<f64>>,
}

/// κ_indiv = mean over bags of ‖[P_T̂ℓ, P_span(uvᵀ)]‖_F with u, v the bottom
/// eigenvectors of the averaged column and row projectors.
pub fn kappa_indiv_estimate(avg: &AveragedProjectors) -> Result<KappaIndiv> {
    if avg.is_empty() {
        return Err(invalid("no bag estimates"));
    }
    let u = bottom_eigenvector(&avg.avg_col);
    let v = bottom_eigenvector(&avg.avg_row);
    let kappa = numeric::compensated_sum(
        avg.tangents
            .iter()
            .map(|t| {
                let (inside, outside) = t.rank_one_split(u.as_slice(), v.as_slice());
                (2.0 * inside * outside).sqrt()
            }),
    ) / avg.len() as f64;
    Ok(KappaIndiv { kappa, u, v: Some(v) })
}

/// Column-space κ_indiv with the bottom eigenvector of the averaged column
/// projector.
pub fn kappa_indiv_column(spaces: &[Subspace]) -> Result<KappaIndiv> {
    let Some(first) = spaces.first() else {
        return Err(invalid("no bag estimates"));
    };
    let p = first.ambient_dim();
    let projs: Vec<DMatrix<f64>> = spaces.iter().map(Subspace::projector).collect();
    let avg = numeric::average_matrices(projs.iter(), p, p);
    let u = bottom_eigenvector(&avg);
    let um = DMatrix::from_column_slice(p, 1, u.as_slice());
    let kappa = numeric::compensated_sum(
        spaces
            .iter()
            .map(|s| span_commutator_from_energy(s.basis().tr_mul(&um).norm_squared())),
    ) / spaces.len() as f64;
    Ok(KappaIndiv { kappa, u, v: None })
}

fn bottom_eigenvector(m: &DMatrix<f64>) -> DVector<f64> {
    let (_, w) = numeric::sym_eigen_desc(m);
    w.column(w.ncols() - 1).into_owned()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlignmentDiagnostic {
    /// Mean over estimates of min(σ_min(C⋆ᵀP_Ĉ C⋆), σ_min(R⋆ᵀP_R̂ R⋆)).
    pub tau: f64,
    /// max(λ_min(P̄_C), λ_min(P̄_R)) of the averaged projectors.
    pub delta: f64,
    /// 2τ − 1 − 2(δ + √δ).
    pub lower_bound: f64,
    /// ‖P_{T⋆⊥} P_span(uvᵀ)‖_F² for the least-aligned u, v of these estimates.
    pub realized: f64,
}

/// How close the least-aligned rank-one direction uvᵀ comes to T⋆⊥, with the
/// guaranteed lower bound in terms of the power of the estimates.
pub fn heuristic_alignment_diag(
    col_estimates: &[Subspace],
    row_estimates: &[Subspace],
    truth: &TangentSpace,
) -> Result<AlignmentDiagnostic> {
    if col_estimates.is_empty() || col_estimates.len() != row_estimates.len() {
        return Err(invalid("need equally many (non-zero) column and row estimates"));
    }
    let (p1, p2) = truth.dims();
    let sigma_min_on = |star: &Subspace, est: &Subspace| -> f64 {
        if star.rank() == 0 {
            return 1.0;
        }
        let g = star.basis().tr_mul(est.basis());
        numeric::min_sym_eigenvalue(&(&g * g.transpose()))
    };
    let tau = numeric::compensated_sum(
        col_estimates
            .iter()
            .zip(row_estimates)
            .map(|(c, r)| sigma_min_on(truth.col(), c).min(sigma_min_on(truth.row(), r))),
    ) / col_estimates.len() as f64;
    let avg = |spaces: &[Subspace], p: usize| {
        let projs: Vec<DMatrix<f64>> = spaces.iter().map(Subspace::projector).collect();
        numeric::average_matrices(projs.iter(), p, p)
    };
    let ac = avg(col_estimates, p1);
    let ar = avg(row_estimates, p2);
    let delta = numeric::min_sym_eigenvalue(&ac).max(numeric::min_sym_eigenvalue(&ar)).max(0.0);
    let u = bottom_eigenvector(&ac);
    let v = bottom_eigenvector(&ar);
    let um = DMatrix::from_column_slice(p1, 1, u.as_slice());
    let vm = DMatrix::from_column_slice(p2, 1, v.as_slice());
    let realized = truth.col().project_complement(&um).norm_squared() * truth.row().project_complement(&vm).norm_squared();
    Ok(AlignmentDiagnostic {
        tau,
        delta,
        lower_bound: 2.0 * tau - 1.0 - 2.0 * (delta + delta.sqrt()),
        realized,
    })
}
