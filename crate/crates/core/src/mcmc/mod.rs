//! Gibbs/Metropolis sampler for the spatial dynamic factor model.

pub mod anchors;
pub mod chain;
pub mod diagnostics;
pub mod params;
pub mod steps;

pub use anchors::{kmeans, select_anchor_sites, select_anchor_states};
pub use chain::*;
pub use diagnostics::*;
pub use params::*;
pub use steps::*;
