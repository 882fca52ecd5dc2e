//! Complementary subsampling and synthetic data for every observation model.

mod bags;
mod generators;
mod snr;
mod truth;

pub use bags::{complementary_bags, BagPlan};
pub use generators::{gen_completion, gen_denoise, gen_denoise_mean, gen_linear};
pub use snr::{calibrate_snr, SnrDefinition, SnrModel};
pub use truth::{gen_low_rank, gen_low_rank_coherent, incoherence, SyntheticTruth};
