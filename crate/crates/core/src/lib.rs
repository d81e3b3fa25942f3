//! Simulation and estimation of lateral mis-registration between a deformable
//! mirror and a Shack-Hartmann wavefront sensor.
//!
//! Two estimators are provided: an open-loop one that correlates a measured
//! modal interaction matrix against a synthetic reference
//! ([`modal`]), and a closed-loop one that reads the shift from the temporal
//! correlation of command telemetry ([`closedloop`]). The remaining modules
//! hold the models needed to simulate both.

pub mod aoloop;
pub mod closedloop;
pub mod config;
pub mod error;
pub mod fft;
pub mod geometry;
pub mod io;
pub mod modal;
pub mod optics;
pub mod rng;
pub mod turbulence;

pub use error::{Error, Result};
