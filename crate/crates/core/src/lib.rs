//! Simulation and analysis of impulsive non-Gaussian noise modeled as a
//! Poisson superposition of random AR(2) transients over Gaussian background.

pub mod error;
pub mod field;
pub mod fit;
pub mod quad;
pub mod rng;
pub mod spectral;
pub mod stats;
pub mod trace;
pub mod waveform;

pub use error::{Error, Result};
pub use trace::Trace;
