//! Signal correction and uncertainty estimation for a six-axis UAV model.
//!
//! The crate couples a fractional-power corrector (rejects bounded large
//! sensing errors), a fractional-power observer (estimates the lumped
//! uncertainty), a quadrotor plant, a sensor simulator and a feedback
//! controller, and drives them from a fixed-step simulation engine.

pub mod config;
pub mod control;
pub mod ekf;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod freq;
pub mod integrate;
pub mod metrics;
pub mod plant;
pub mod sensors;
pub mod study;
pub mod trace;

pub use error::{Error, Result};
