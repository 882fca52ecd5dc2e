//! Geometric false-discovery control for low-rank matrix estimation.
//!
//! Tangent spaces of the determinantal variety play the role that selected
//! variable sets play in sparse regression: an estimate's tangent space is
//! compared against the population tangent space to count false discoveries,
//! and subsampling is used to keep only the directions that are stable
//! across bags.

// Links the system OpenBLAS that provides LAPACK.
extern crate openblas_src as _;

pub mod bounds;
pub mod error;
pub mod estimators;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod numeric;
pub mod rng;
pub mod sampling;
pub mod stability;

pub use error::{Error, Result};
pub use linalg::{Subspace, TangentSpace};
