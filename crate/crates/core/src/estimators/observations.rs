use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, mismatch, Result};
use crate::numeric;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry {
    pub i: usize,
    pub j: usize,
    pub y: f64,
}

/// y ≈ ⟨A, L⟩. Sensing matrices are shared so that bags do not copy them.
#[derive(Clone, Debug)]
pub struct LinearObservation {
    pub a: Arc<DMatrix<f64>>,
    pub y: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationModel {
    Entrywise,
    Replicate,
    Linear,
}

#[derive(Clone, Debug)]
pub enum Observations {
    Entrywise(Vec<Entry>),
    Replicate(Vec<Arc<DMatrix<f64>>>),
    Linear(Vec<LinearObservation>),
}

#[derive(Clone, Debug)]
pub struct ObservationSet {
    p1: usize,
    p2: usize,
    data: Observations,
}

impl ObservationSet {
    pub fn entrywise(p1: usize, p2: usize, entries: Vec<Entry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(invalid("no observations"));
        }
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.i >= p1 || e.j >= p2 {
                return Err(invalid(format!("entry ({}, {}) outside {p1}×{p2}", e.i, e.j)));
            }
            if !e.y.is_finite() {
                return Err(invalid(format!("non-finite value at ({}, {})", e.i, e.j)));
            }
            if !seen.insert((e.i, e.j)) {
                return Err(invalid(format!("entry ({}, {}) observed twice", e.i, e.j)));
            }
        }
        Ok(Self {
            p1,
            p2,
            data: Observations::Entrywise(entries),
        })
    }

    pub fn replicate(replicates: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::replicate_shared(replicates.into_iter().map(Arc::new).collect())
    }

    pub fn replicate_shared(replicates: Vec<Arc<DMatrix<f64>>>) -> Result<Self> {
        let Some(first) = replicates.first() else {
            return Err(invalid("no replicates"));
        };
        let (p1, p2) = first.shape();
        for r in &replicates {
            if r.shape() != (p1, p2) {
                return Err(mismatch(format!("replicates of shapes {:?} and {:?}", (p1, p2), r.shape())));
            }
            if !r.iter().all(|x| x.is_finite()) {
                return Err(invalid("replicate has non-finite entries"));
            }
        }
        Ok(Self {
            p1,
            p2,
            data: Observations::Replicate(replicates),
        })
    }

    pub fn linear(p1: usize, p2: usize, obs: Vec<LinearObservation>) -> Result<Self> {
        if obs.is_empty() {
            return Err(invalid("no observations"));
        }
        for o in &obs {
            if o.a.shape() != (p1, p2) {
                return Err(mismatch(format!("sensing matrix {:?} for {p1}×{p2} model", o.a.shape())));
            }
            if !o.y.is_finite() || !o.a.iter().all(|x| x.is_finite()) {
                return Err(invalid("non-finite linear observation"));
            }
        }
        Ok(Self {
            p1,
            p2,
            data: Observations::Linear(obs),
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.p1, self.p2)
    }

    pub fn data(&self) -> &Observations {
        &self.data
    }

    pub fn model(&self) -> ObservationModel {
        match self.data {
            Observations::Entrywise(_) => ObservationModel::Entrywise,
            Observations::Replicate(_) => ObservationModel::Replicate,
            Observations::Linear(_) => ObservationModel::Linear,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            Observations::Entrywise(v) => v.len(),
            Observations::Replicate(v) => v.len(),
            Observations::Linear(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Observations at the given positions, in the given order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(invalid("empty subset"));
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.len()) {
            return Err(invalid(format!("observation index {bad} out of range")));
        }
        let data = match &self.data {
            Observations::Entrywise(v) => Observations::Entrywise(idx.iter().map(|&i| v[i]).collect()),
            Observations::Replicate(v) => Observations::Replicate(idx.iter().map(|&i| v[i].clone()).collect()),
            Observations::Linear(v) => Observations::Linear(idx.iter().map(|&i| v[i].clone()).collect()),
        };
        Ok(Self {
            p1: self.p1,
            p2: self.p2,
            data,
        })
    }

    pub fn entries(&self) -> Option<&[Entry]> {
        match &self.data {
            Observations::Entrywise(v) => Some(v),
            _ => None,
        }
    }

    pub fn replicates(&self) -> Option<&[Arc<DMatrix<f64>>]> {
        match &self.data {
            Observations::Replicate(v) => Some(v),
            _ => None,
        }
    }

    pub fn functionals(&self) -> Option<&[LinearObservation]> {
        match &self.data {
            Observations::Linear(v) => Some(v),
            _ => None,
        }
    }

    /// Compensated entrywise mean of the replicates.
    pub fn replicate_mean(&self) -> Option<DMatrix<f64>> {
        self.replicates()
            .map(|reps| numeric::average_matrices(reps.iter().map(|r| r.as_ref()), self.p1, self.p2))
    }

    /// Zero-filled matrix of observed entries (entrywise model only).
    pub fn sampled_matrix(&self) -> Option<DMatrix<f64>> {
        let entries = self.entries()?;
        let mut m = DMatrix::zeros(self.p1, self.p2);
        for e in entries {
            m[(e.i, e.j)] = e.y;
        }
        Some(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(i: usize, j: usize, y: f64) -> Entry {
        Entry { i, j, y }
    }

    #[test]
    fn entrywise_validation() {
        assert!(ObservationSet::entrywise(2, 2, vec![]).is_err());
        assert!(ObservationSet::entrywise(2, 2, vec![e(2, 0, 1.0)]).is_err());
        assert!(ObservationSet::entrywise(2, 2, vec![e(0, 0, 1.0), e(0, 0, 2.0)]).is_err());
        assert!(ObservationSet::entrywise(2, 2, vec![e(0, 0, f64::NAN)]).is_err());
        let o = ObservationSet::entrywise(2, 3, vec![e(0, 0, 1.0), e(1, 2, 2.0)]).unwrap();
        assert_eq!(o.len(), 2);
        assert_eq!(o.model(), ObservationModel::Entrywise);
    }

    #[test]
    fn subset_preserves_order() {
        let o = ObservationSet::entrywise(3, 3, vec![e(0, 0, 1.0), e(1, 1, 2.0), e(2, 2, 3.0)]).unwrap();
        let s = o.subset(&[2, 0]).unwrap();
        assert_eq!(s.entries().unwrap(), &[e(2, 2, 3.0), e(0, 0, 1.0)]);
        assert!(o.subset(&[3]).is_err());
    }

    #[test]
    fn replicate_mean_cancels() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -2.0, 3.0, 0.5]);
        let o = ObservationSet::replicate(vec![m.clone(), -m]).unwrap();
        assert_eq!(o.replicate_mean().unwrap().amax(), 0.0);
        assert!(ObservationSet::replicate(vec![DMatrix::zeros(2, 2), DMatrix::zeros(2, 3)]).is_err());
    }
}
