//! Measurement and state equations, companion form, filtering and
//! simulation of the latent factors.

mod kalman;
mod model;
mod simulate;

pub use kalman::{
    ffbs_draw, ffbs_from_filter, kalman_filter, kalman_smoother, smooth_filtered, FilterOutput, InitialState, SmootherOutput,
    StatePath,
};
pub use model::{assemble_companion, FactorDynamics, FactorPath, MeasurementModel, StateSpaceForm};
pub use simulate::{simulate_factors, simulate_observations, spectral_radius};
