//! Bayesian spatial dynamic structural equation models on lattice panels.

pub mod data;
pub mod ecm;
pub mod error;
pub mod forecast;
pub mod gmrf;
pub mod io;
pub mod linalg;
pub mod mcmc;
pub mod multipliers;
pub mod selection;
pub mod state_space;
pub mod synthetic;

pub use error::{Error, Result};

/// Seedable generator used throughout; chains get independent streams.
pub type RandomSource = rand_chacha::ChaCha8Rng;
