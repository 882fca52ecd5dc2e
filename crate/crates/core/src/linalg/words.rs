//! Traces of products of projectors through their low-rank bases.
//!
//! A product of tangent projectors on p1×p2 matrices expands, via
//! P_T = I − P_{C⊥} ⊗ P_{R⊥}, into single Kronecker terms whose traces
//! factor into a column-side and a row-side trace. Each side is a product of
//! complement projectors, which expands by inclusion–exclusion into traces of
//! products of rank-r projectors, i.e. traces of small r×r matrices. This
//! keeps bound computations at p = 200 from ever forming a p×p projector
//! product, let alone a p1p2 × p1p2 operator.

use nalgebra::DMatrix;

use crate::error::{mismatch, Result};

use super::{Subspace, TangentSpace};

#[derive(Clone, Copy, Debug)]
pub enum Factor<'a> {
    /// P_S.
    Proj(&'a Subspace),
    /// I − P_S.
    Comp(&'a Subspace),
}

#[derive(Clone, Copy, Debug)]
pub enum TangentFactor<'a> {
    /// P_T.
    Tangent(&'a TangentSpace),
    /// P_{T⊥}.
    Complement(&'a TangentSpace),
}

/// trace of the product of the factors on R^ambient.
pub fn word_trace(ambient: usize, word: &[Factor<'_>]) -> Result<f64> {
    for f in word {
        let s = match f {
            Factor::Proj(s) | Factor::Comp(s) => s,
        };
        if s.ambient_dim() != ambient {
            return Err(mismatch(format!("factor in R^{} inside a word on R^{ambient}", s.ambient_dim())));
        }
    }
    let comps: Vec<usize> = word
        .iter()
        .enumerate()
        .filter(|(_, f)| matches!(f, Factor::Comp(_)))
        .map(|(i, _)| i)
        .collect();
    let mut total = 0.0;
    let mut chain: Vec<&Subspace> = Vec::with_capacity(word.len());
    for mask in 0u32..(1u32 << comps.len()) {
        chain.clear();
        let mut sign = 1.0;
        let mut k = 0;
        for (i, f) in word.iter().enumerate() {
            match f {
                Factor::Proj(s) => chain.push(s),
                Factor::Comp(s) => {
                    debug_assert_eq!(comps[k], i);
                    if mask & (1 << k) != 0 {
                        chain.push(s);
                        sign = -sign;
                    }
                    k += 1;
                }
            }
        }
        total += sign * projector_chain_trace(ambient, &chain);
    }
    Ok(total)
}

/// tr(P_1 P_2 ⋯ P_m) = tr(B1ᵀB2 · B2ᵀB3 ⋯ BmᵀB1); the empty product is I.
fn projector_chain_trace(ambient: usize, chain: &[&Subspace]) -> f64 {
    match chain.len() {
        0 => ambient as f64,
        1 => chain[0].rank() as f64,
        _ => {
            if chain.iter().any(|s| s.rank() == 0) {
                return 0.0;
            }
            let mut acc: DMatrix<f64> = chain[0].basis().tr_mul(chain[1].basis());
            for w in chain[1..].windows(2) {
                acc = acc * w[0].basis().tr_mul(w[1].basis());
            }
            let closing = chain[chain.len() - 1].basis().tr_mul(chain[0].basis());
            // tr(acc · closing) without forming the product.
            acc.component_mul(&closing.transpose()).sum()
        }
    }
}

/// trace of a product of tangent projectors and their complements.
pub fn tangent_word_trace(word: &[TangentFactor<'_>]) -> Result<f64> {
    let Some(first) = word.first() else {
        return Err(mismatch("empty tangent word has no ambient dimensions"));
    };
    let dims = tangent_of(first).dims();
    for f in word {
        tangent_of(f).check_same_dims(tangent_of(first))?;
    }
    let tangents: Vec<usize> = word
        .iter()
        .enumerate()
        .filter(|(_, f)| matches!(f, TangentFactor::Tangent(_)))
        .map(|(i, _)| i)
        .collect();
    let mut total = 0.0;
    let mut cols: Vec<Factor<'_>> = Vec::with_capacity(word.len());
    let mut rows: Vec<Factor<'_>> = Vec::with_capacity(word.len());
    for mask in 0u32..(1u32 << tangents.len()) {
        cols.clear();
        rows.clear();
        let mut sign = 1.0;
        let mut k = 0;
        for f in word {
            let (t, keep) = match f {
                TangentFactor::Complement(t) => (t, true),
                TangentFactor::Tangent(t) => {
                    let chosen = mask & (1 << k) != 0;
                    k += 1;
                    if chosen {
                        sign = -sign;
                    }
                    (t, chosen)
                }
            };
            if keep {
                cols.push(Factor::Comp(t.col()));
                rows.push(Factor::Comp(t.row()));
            }
        }
        total += sign * word_trace(dims.0, &cols)? * word_trace(dims.1, &rows)?;
    }
    Ok(total)
}

fn tangent_of<'a>(f: &TangentFactor<'a>) -> &'a TangentSpace {
    match f {
        TangentFactor::Tangent(t) | TangentFactor::Complement(t) => t,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_subspace, op_compose, tangent_complement_operator, tangent_operator};

    fn random_tangent(p1: usize, p2: usize, r: usize, seed: u64) -> TangentSpace {
        TangentSpace::new(haar_subspace(p1, r, seed).unwrap(), haar_subspace(p2, r, seed + 31).unwrap()).unwrap()
    }

    #[test]
    fn subspace_words_match_dense() {
        let a = haar_subspace(6, 2, 1).unwrap();
        let b = haar_subspace(6, 3, 2).unwrap();
        let c = haar_subspace(6, 1, 3).unwrap();
        let i = DMatrix::<f64>::identity(6, 6);
        let dense = (&i - a.projector()) * b.projector() * (&i - c.projector()) * (&i - a.projector());
        let w = word_trace(6, &[Factor::Comp(&a), Factor::Proj(&b), Factor::Comp(&c), Factor::Comp(&a)]).unwrap();
        assert!((w - dense.trace()).abs() < 1e-12);
        assert_eq!(word_trace(6, &[]).unwrap(), 6.0);
    }

    #[test]
    fn tangent_words_match_operator_algebra() {
        let t1 = random_tangent(5, 4, 2, 1);
        let t2 = random_tangent(5, 4, 1, 2);
        let t3 = random_tangent(5, 4, 3, 3);
        let ops = op_compose(
            &op_compose(&tangent_operator(&t1), &tangent_operator(&t2)).unwrap(),
            &op_compose(&tangent_complement_operator(&t3), &tangent_operator(&t2)).unwrap(),
        )
        .unwrap();
        let w = tangent_word_trace(&[
            TangentFactor::Tangent(&t1),
            TangentFactor::Tangent(&t2),
            TangentFactor::Complement(&t3),
            TangentFactor::Tangent(&t2),
        ])
        .unwrap();
        assert!((w - ops.trace()).abs() < 1e-10);
    }

    #[test]
    fn single_factor_traces_are_dimensions() {
        let t = random_tangent(7, 9, 3, 4);
        assert!((tangent_word_trace(&[TangentFactor::Tangent(&t)]).unwrap() - t.dim() as f64).abs() < 1e-10);
        assert!(
            (tangent_word_trace(&[TangentFactor::Complement(&t)]).unwrap() - t.complement_dim() as f64).abs() < 1e-10
        );
    }
}
