//! Subspaces, tangent spaces of the determinantal variety, and the exact
//! operator calculus on p1×p2 matrices.

mod operator;
mod subspace;
mod tangent;
pub mod words;

pub use operator::{
    matrix_span_operator, op_add, op_compose, op_scale, op_trace, span_operator, tangent_complement_operator,
    tangent_operator, KronTerm, MatrixOperator, RankOneTerm,
};
pub use subspace::{haar_orthogonal, haar_subspace, haar_subspace_with, orthonormalize, principal_angles, Subspace};
pub use tangent::{tangent_apply, tangent_apply_complement, tangent_dim, TangentSpace};

/// Default relative tolerance for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-8;

/// Tolerance on ‖BᵀB − I‖ when accepting a basis as orthonormal.
pub const ORTHO_TOL: f64 = 1e-10;
