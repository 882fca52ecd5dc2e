//! Average projection operators, the stable-tangent-space criterion and the
//! selection algorithms built on it.

mod algorithm;
mod average;
mod membership;
mod pipeline;

pub use algorithm::{
    select_stable, select_stable_modified, select_stable_with, column_stability, rank_pinned, sigma_min_curve, CurveMode, Diagnostics, Selected,
    SelectionMode, StabilityReport,
};
pub use average::{average_projectors, AveragedProjectors};
pub use membership::{membership_gram, membership_gram_direct, stable_membership, Membership, MEMBERSHIP_SLACK};
pub use pipeline::{estimate_bags, run_pipeline, run_pipeline_from, select, BagEstimates, PipelineConfig, PipelineOutput};

/// Default stability threshold.
pub const DEFAULT_ALPHA: f64 = 0.7;
/// Default number of bags.
pub const DEFAULT_BAGS: usize = 100;
