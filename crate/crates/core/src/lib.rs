//! Deterministic equivalents for MMSE receivers on multiple-access channels
//! with Haar-precoded transmitters.

pub mod cli;
pub mod correlation;
pub mod error;
pub mod fixed_point;
pub mod matrix;
pub mod metrics;
pub mod montecarlo;
pub mod power_allocation;
pub mod presets;
pub mod scenario;
pub mod stream_control;

pub use error::{Error, Result};
