//! Measurement simulation: absorption scaling, photon noise, ring artifacts,
//! view subsampling and value-range alignment.

mod affine;
mod config;
mod noise;

pub use affine::{affine_range_map, unit_range_coefficients, Direction};
pub use config::{builtin_config, RingVariance, SimulationConfig};
pub use noise::{
    apply_poisson_noise, apply_ring_artifact, poisson_counts, scale_to_absorption,
    simulate_measurements, subsample_angles, subsample_indices, SimulatedMeasurement,
};
