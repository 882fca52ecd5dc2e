//! σ_min(P_T P_avg P_T) restricted to T, via the Gram matrix of P_avg in an
//! orthonormal basis of T.

use nalgebra::DMatrix;

use crate::error::{invalid, mismatch, Result};
use crate::linalg::TangentSpace;
use crate::numeric;

use super::AveragedProjectors;

/// Membership holds when σ_min ≥ α − MEMBERSHIP_SLACK.
pub const MEMBERSHIP_SLACK: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Membership {
    pub member: bool,
    pub sigma_min: f64,
}

/// Whether T belongs to the α-stable set. The zero tangent space always does,
/// with σ_min := 1. Levels at or below zero are trivially met.
pub fn stable_membership(t: &TangentSpace, avg: &AveragedProjectors, alpha: f64) -> Result<Membership> {
    if !alpha.is_finite() {
        return Err(invalid("stability level must be finite"));
    }
    if t.dims() != avg.dims() {
        return Err(mismatch(format!(
            "tangent space on {:?} but bag estimates on {:?}",
            t.dims(),
            avg.dims()
        )));
    }
    if t.rank() == 0 {
        return Ok(Membership {
            member: true,
            sigma_min: 1.0,
        });
    }
    let g = membership_gram(t, avg)?;
    let sigma_min = numeric::min_sym_eigenvalue(&g);
    Ok(Membership {
        member: sigma_min >= alpha - MEMBERSHIP_SLACK,
        sigma_min,
    })
}

/// Gram matrix ⟨E_a, P_avg(E_b)⟩ for the basis E = w_i z_jᵀ (i < r or j < r)
/// of T, where W = [U, U⊥] and Z = [V, V⊥] are completed frames. Same
/// spectrum as the literal construction in [`membership_gram_direct`].
pub fn membership_gram(t: &TangentSpace, avg: &AveragedProjectors) -> Result<DMatrix<f64>> {
    if t.dims() != avg.dims() {
        return Err(mismatch("tangent space and bag estimates differ in shape"));
    }
    let w = t.col().completed_frame();
    let z = t.row().completed_frame();
    Ok(RotatedBags::new(&w, &z, avg).gram(t.rank()))
}

/// Bag projectors expressed in fixed frames W (columns) and Z (rows). In the
/// rotated coordinates X = Wᵀ M Z every bag projector acts as
/// X ↦ K X + X H − K X H with K = Wᵀ P_Ĉ W and H = Zᵀ P_R̂ Z, so for the
/// basis w_i z_jᵀ (i < r or j < r) of T(W[:, :r], Z[:, :r])
/// G[(i,j),(k,l)] = K̄_ik δ_jl + δ_ik H̄_jl − mean_ℓ K^ℓ_ik H^ℓ_jl.
pub(crate) struct RotatedBags {
    p1: usize,
    p2: usize,
    nb: usize,
    kst: Vec<f64>,
    hst: Vec<f64>,
    kbar: Vec<f64>,
    hbar: Vec<f64>,
}

impl RotatedBags {
    pub(crate) fn new(w: &DMatrix<f64>, z: &DMatrix<f64>, avg: &AveragedProjectors) -> Self {
        let nb = avg.len();
        let kst = rotated_stack(avg.tangents.iter().map(|t| t.col().basis()), w, nb);
        let hst = rotated_stack(avg.tangents.iter().map(|t| t.row().basis()), z, nb);
        let means = |st: &[f64]| -> Vec<f64> { st.chunks(nb).map(|c| c.iter().sum::<f64>() / nb as f64).collect() };
        Self {
            p1: w.nrows(),
            p2: z.nrows(),
            nb,
            kbar: means(&kst),
            hbar: means(&hst),
            kst,
            hst,
        }
    }

    pub(crate) fn gram(&self, r: usize) -> DMatrix<f64> {
        let (p1, p2, nb) = (self.p1, self.p2, self.nb);
        let mut idx: Vec<(usize, usize)> = Vec::with_capacity(r * (p1 + p2) - r * r);
        for i in 0..r {
            for j in 0..r {
                idx.push((i, j));
            }
        }
        for i in 0..r {
            for j in r..p2 {
                idx.push((i, j));
            }
        }
        for i in r..p1 {
            for j in 0..r {
                idx.push((i, j));
            }
        }
        let d = idx.len();
        let inv = 1.0 / nb as f64;
        let mut g = DMatrix::zeros(d, d);
        for a in 0..d {
            let (i, j) = idx[a];
            for b in a..d {
                let (k, l) = idx[b];
                let ik = i * p1 + k;
                let jl = j * p2 + l;
                let ks = &self.kst[ik * nb..(ik + 1) * nb];
                let hs = &self.hst[jl * nb..(jl + 1) * nb];
                let cross: f64 = ks.iter().zip(hs).map(|(x, y)| x * y).sum();
                let mut v = -cross * inv;
                if j == l {
                    v += self.kbar[ik];
                }
                if i == k {
                    v += self.hbar[jl];
                }
                g[(a, b)] = v;
                g[(b, a)] = v;
            }
        }
        g
    }
}

/// Entries of Fᵀ P_ℓ F for every bag, laid out as [(a·p + b)·B + ℓ].
fn rotated_stack<'a, I: Iterator<Item = &'a DMatrix<f64>>>(bases: I, frame: &DMatrix<f64>, nb: usize) -> Vec<f64> {
    let p = frame.nrows();
    let mut st = vec![0.0; p * p * nb];
    for (l, basis) in bases.enumerate() {
        if basis.ncols() == 0 {
            continue;
        }
        let a = frame.tr_mul(basis);
        let k = &a * a.transpose();
        for x in 0..p {
            for y in 0..p {
                st[(x * p + y) * nb + l] = k[(x, y)];
            }
        }
    }
    st
}

/// Positive-definiteness test of G − (level − slack)·I; cheaper than an
/// eigensolve when only the yes/no answer is needed.
pub(crate) fn gram_meets_level(g: &DMatrix<f64>, level: f64) -> bool {
    if g.nrows() == 0 {
        return true;
    }
    let shift = level - MEMBERSHIP_SLACK;
    let mut m = g.clone();
    for i in 0..m.nrows() {
        m[(i, i)] -= shift;
    }
    m.cholesky().is_some()
}

/// Literal construction: basis {u_i v_jᵀ} ∪ {u_i w_jᵀ} ∪ {c_i v_jᵀ} and
/// B tangent projections per basis element. Quadratic in dim(T)·B·p1p2, so
/// only for small problems and cross-checks.
pub fn membership_gram_direct(t: &TangentSpace, avg: &AveragedProjectors) -> Result<DMatrix<f64>> {
    let u = t.col().basis();
    let v = t.row().basis();
    let c = t.col().complement();
    let w = t.row().complement();
    let mut basis: Vec<DMatrix<f64>> = Vec::with_capacity(t.dim());
    for i in 0..u.ncols() {
        for j in 0..v.ncols() {
            basis.push(u.column(i) * v.column(j).transpose());
        }
    }
    for i in 0..u.ncols() {
        for j in 0..w.rank() {
            basis.push(u.column(i) * w.basis().column(j).transpose());
        }
    }
    for i in 0..c.rank() {
        for j in 0..v.ncols() {
            basis.push(c.basis().column(i) * v.column(j).transpose());
        }
    }
    let images: Vec<DMatrix<f64>> = basis.iter().map(|e| avg.apply(e)).collect::<Result<_>>()?;
    let d = basis.len();
    Ok(DMatrix::from_fn(d, d, |a, b| basis[a].dot(&images[b])))
}
