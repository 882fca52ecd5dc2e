//! Exact representation of linear maps on p1×p2 matrices as sums of
//! Kronecker-form terms M ↦ c·A·M·B and rank-one terms M ↦ c·⟨G, M⟩·H.
//!
//! Everything is expressed through the action on matrices, so traces and
//! compositions never depend on a vectorization convention. `to_dense` picks
//! column-major vec for callers that want an explicit matrix.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, mismatch, Result};

use super::TangentSpace;

#[derive(Clone, Debug)]
pub struct KronTerm {
    pub left: DMatrix<f64>,
    pub right: DMatrix<f64>,
    pub coeff: f64,
}

#[derive(Clone, Debug)]
pub struct RankOneTerm {
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub coeff: f64,
}

#[derive(Clone, Debug)]
pub struct MatrixOperator {
    pub p1: usize,
    pub p2: usize,
    pub kron_terms: Vec<KronTerm>,
    pub rank1_terms: Vec<RankOneTerm>,
}

impl MatrixOperator {
    pub fn zero(p1: usize, p2: usize) -> Self {
        Self {
            p1,
            p2,
            kron_terms: Vec::new(),
            rank1_terms: Vec::new(),
        }
    }

    pub fn identity(p1: usize, p2: usize) -> Self {
        let mut op = Self::zero(p1, p2);
        op.push_kron(DMatrix::identity(p1, p1), DMatrix::identity(p2, p2), 1.0);
        op
    }

    pub fn push_kron(&mut self, left: DMatrix<f64>, right: DMatrix<f64>, coeff: f64) {
        debug_assert_eq!(left.shape(), (self.p1, self.p1));
        debug_assert_eq!(right.shape(), (self.p2, self.p2));
        self.kron_terms.push(KronTerm { left, right, coeff });
    }

    pub fn push_rank_one(&mut self, g: DMatrix<f64>, h: DMatrix<f64>, coeff: f64) {
        debug_assert_eq!(g.shape(), (self.p1, self.p2));
        debug_assert_eq!(h.shape(), (self.p1, self.p2));
        self.rank1_terms.push(RankOneTerm { g, h, coeff });
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.p1, self.p2)
    }

    pub fn num_terms(&self) -> usize {
        self.kron_terms.len() + self.rank1_terms.len()
    }

    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.shape() != self.dims() {
            return Err(mismatch(format!(
                "operator on {:?} applied to {:?} matrix",
                self.dims(),
                m.shape()
            )));
        }
        let mut out = DMatrix::zeros(self.p1, self.p2);
        for t in &self.kron_terms {
            out += (&t.left * m * &t.right) * t.coeff;
        }
        for t in &self.rank1_terms {
            out += &t.h * (t.coeff * t.g.dot(m));
        }
        Ok(out)
    }

    /// Adjoint with respect to the Frobenius inner product.
    pub fn adjoint(&self) -> MatrixOperator {
        MatrixOperator {
            p1: self.p1,
            p2: self.p2,
            kron_terms: self
                .kron_terms
                .iter()
                .map(|t| KronTerm {
                    left: t.left.transpose(),
                    right: t.right.transpose(),
                    coeff: t.coeff,
                })
                .collect(),
            rank1_terms: self
                .rank1_terms
                .iter()
                .map(|t| RankOneTerm {
                    g: t.h.clone(),
                    h: t.g.clone(),
                    coeff: t.coeff,
                })
                .collect(),
        }
    }

    pub fn trace(&self) -> f64 {
        let k: f64 = self.kron_terms.iter().map(|t| t.coeff * t.left.trace() * t.right.trace()).sum();
        let r: f64 = self.rank1_terms.iter().map(|t| t.coeff * t.g.dot(&t.h)).sum();
        k + r
    }

    /// Dense (p1p2 × p1p2) matrix acting on column-major vec(M):
    /// vec(A M B) = (Bᵀ ⊗ A) vec(M).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.p1 * self.p2;
        let mut out = DMatrix::zeros(n, n);
        for t in &self.kron_terms {
            out += t.right.transpose().kronecker(&t.left) * t.coeff;
        }
        for t in &self.rank1_terms {
            let g = DVector::from_column_slice(t.g.as_slice());
            let h = DVector::from_column_slice(t.h.as_slice());
            out += (h * g.transpose()) * t.coeff;
        }
        out
    }

    fn check_same(&self, other: &MatrixOperator) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(mismatch(format!(
                "operators on {:?} and {:?} matrices",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }
}

/// P_T as the three-term action P_C M + M P_R − P_C M P_R.
pub fn tangent_operator(t: &TangentSpace) -> MatrixOperator {
    let (p1, p2) = t.dims();
    let pc = t.col().projector();
    let pr = t.row().projector();
    let mut op = MatrixOperator::zero(p1, p2);
    op.push_kron(pc.clone(), DMatrix::identity(p2, p2), 1.0);
    op.push_kron(DMatrix::identity(p1, p1), pr.clone(), 1.0);
    op.push_kron(pc, pr, -1.0);
    op
}

/// P_{T⊥} = (I − P_C) ⊗ (I − P_R), one term.
pub fn tangent_complement_operator(t: &TangentSpace) -> MatrixOperator {
    let (p1, p2) = t.dims();
    let qc = DMatrix::identity(p1, p1) - t.col().projector();
    let qr = DMatrix::identity(p2, p2) - t.row().projector();
    let mut op = MatrixOperator::zero(p1, p2);
    op.push_kron(qc, qr, 1.0);
    op
}

/// Projector onto span(u vᵀ): M ↦ (u uᵀ) M (v vᵀ) after normalizing u, v.
pub fn span_operator(u: &DVector<f64>, v: &DVector<f64>) -> Result<MatrixOperator> {
    let nu = u.norm();
    let nv = v.norm();
    if !(nu > 0.0 && nv > 0.0) || !nu.is_finite() || !nv.is_finite() {
        return Err(invalid("span direction must be a nonzero finite vector"));
    }
    let u = u / nu;
    let v = v / nv;
    let mut op = MatrixOperator::zero(u.len(), v.len());
    op.push_kron(&u * u.transpose(), &v * v.transpose(), 1.0);
    Ok(op)
}

/// Projector onto span(M) for a general matrix, as a rank-one term.
pub fn matrix_span_operator(m: &DMatrix<f64>) -> Result<MatrixOperator> {
    let n = m.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(invalid("span matrix must be nonzero and finite"));
    }
    let unit = m / n;
    let mut op = MatrixOperator::zero(m.nrows(), m.ncols());
    op.push_rank_one(unit.clone(), unit, 1.0);
    Ok(op)
}

/// a ∘ b, i.e. apply b first.
pub fn op_compose(a: &MatrixOperator, b: &MatrixOperator) -> Result<MatrixOperator> {
    a.check_same(b)?;
    let mut out = MatrixOperator::zero(a.p1, a.p2);
    for ta in &a.kron_terms {
        for tb in &b.kron_terms {
            out.push_kron(&ta.left * &tb.left, &tb.right * &ta.right, ta.coeff * tb.coeff);
        }
        // A (⟨G, M⟩ H) B = ⟨G, M⟩ (A H B)
        for tb in &b.rank1_terms {
            out.push_rank_one(tb.g.clone(), &ta.left * &tb.h * &ta.right, ta.coeff * tb.coeff);
        }
    }
    for ta in &a.rank1_terms {
        // ⟨G, A M B⟩ H = ⟨Aᵀ G Bᵀ, M⟩ H
        for tb in &b.kron_terms {
            out.push_rank_one(
                tb.left.transpose() * &ta.g * tb.right.transpose(),
                ta.h.clone(),
                ta.coeff * tb.coeff,
            );
        }
        // ⟨G1, ⟨G2, M⟩ H2⟩ H1 = ⟨G1, H2⟩ ⟨G2, M⟩ H1
        for tb in &b.rank1_terms {
            out.push_rank_one(tb.g.clone(), ta.h.clone(), ta.coeff * tb.coeff * ta.g.dot(&tb.h));
        }
    }
    Ok(out)
}

pub fn op_add(a: &MatrixOperator, b: &MatrixOperator) -> Result<MatrixOperator> {
    a.check_same(b)?;
    let mut out = a.clone();
    out.kron_terms.extend(b.kron_terms.iter().cloned());
    out.rank1_terms.extend(b.rank1_terms.iter().cloned());
    Ok(out)
}

pub fn op_scale(a: &MatrixOperator, s: f64) -> MatrixOperator {
    let mut out = a.clone();
    for t in &mut out.kron_terms {
        t.coeff *= s;
    }
    for t in &mut out.rank1_terms {
        t.coeff *= s;
    }
    out
}

pub fn op_trace(a: &MatrixOperator) -> f64 {
    a.trace()
}
