use nalgebra::DMatrix;

use crate::error::{invalid, Result};
use crate::linalg::TangentSpace;
use crate::numeric::{self, CompensatedSum};

/// P_avg = (1/B) Σ_ℓ P_{T̂ℓ}, kept symbolically through the bag tangents,
/// together with the dense row- and column-space averages.
#[derive(Clone, Debug)]
pub struct AveragedProjectors {
    pub tangents: Vec<TangentSpace>,
    pub avg_col: DMatrix<f64>,
    pub avg_row: DMatrix<f64>,
}

pub fn average_projectors(tangents: Vec<TangentSpace>) -> Result<AveragedProjectors> {
    let Some(first) = tangents.first() else {
        return Err(invalid("no bag estimates to average"));
    };
    let (p1, p2) = first.dims();
    for t in &tangents {
        t.check_same_dims(first)?;
    }
    let avg_col = average_projector(tangents.iter().map(|t| t.col().basis()), p1);
    let avg_row = average_projector(tangents.iter().map(|t| t.row().basis()), p2);
    Ok(AveragedProjectors {
        tangents,
        avg_col,
        avg_row,
    })
}

/// Compensated average of U Uᵀ over bases, summed in the given order.
fn average_projector<'a, I: Iterator<Item = &'a DMatrix<f64>>>(bases: I, p: usize) -> DMatrix<f64> {
    let mut acc = vec![CompensatedSum::new(); p * p];
    let mut count = 0usize;
    for b in bases {
        count += 1;
        if b.ncols() == 0 {
            continue;
        }
        let proj = b * b.transpose();
        for (a, &x) in acc.iter_mut().zip(proj.as_slice()) {
            a.add(x);
        }
    }
    let inv = 1.0 / count as f64;
    let m = DMatrix::from_iterator(p, p, acc.iter().map(|s| s.value() * inv));
    numeric::symmetrize(&m)
}

impl AveragedProjectors {
    pub fn len(&self) -> usize {
        self.tangents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tangents.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.avg_col.nrows(), self.avg_row.nrows())
    }

    /// trace(P_avg), the mean bag tangent dimension.
    pub fn trace(&self) -> f64 {
        numeric::compensated_sum(self.tangents.iter().map(|t| t.dim() as f64)) / self.len() as f64
    }

    /// P_avg(M).
    pub fn apply(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut acc = DMatrix::zeros(m.nrows(), m.ncols());
        for t in &self.tangents {
            acc += t.apply(m)?;
        }
        Ok(acc / self.len() as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{haar_subspace, Subspace};

    #[test]
    fn identical_bags_give_projector() {
        let t = TangentSpace::new(haar_subspace(5, 2, 1).unwrap(), haar_subspace(4, 2, 2).unwrap()).unwrap();
        let avg = average_projectors(vec![t.clone(); 4]).unwrap();
        let vals = numeric::sym_eigenvalues_desc(&avg.avg_col);
        for v in vals {
            assert!(v.abs() < 1e-10 || (v - 1.0).abs() < 1e-10);
        }
        assert!((avg.trace() - t.dim() as f64).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_rank_one_columns_split_mass() {
        let a = TangentSpace::new(Subspace::coordinate(3, &[0]).unwrap(), Subspace::coordinate(3, &[0]).unwrap()).unwrap();
        let b = TangentSpace::new(Subspace::coordinate(3, &[1]).unwrap(), Subspace::coordinate(3, &[0]).unwrap()).unwrap();
        let avg = average_projectors(vec![a, b]).unwrap();
        let vals = numeric::sym_eigenvalues_desc(&avg.avg_col);
        assert!((vals[0] - 0.5).abs() < 1e-12 && (vals[1] - 0.5).abs() < 1e-12 && vals[2].abs() < 1e-12);
    }

    #[test]
    fn column_trace_is_mean_rank() {
        let ts: Vec<_> = (0..5)
            .map(|k| {
                let r = k % 3;
                TangentSpace::new(haar_subspace(6, r, k as u64).unwrap(), haar_subspace(6, r, 50 + k as u64).unwrap())
                    .unwrap()
            })
            .collect();
        let mean_rank = ts.iter().map(|t| t.rank() as f64).sum::<f64>() / 5.0;
        let avg = average_projectors(ts).unwrap();
        assert!((avg.avg_col.trace() - mean_rank).abs() < 1e-10);
    }

    #[test]
    fn empty_rejected() {
        assert!(average_projectors(Vec::new()).is_err());
    }
}
