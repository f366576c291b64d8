//! Simulation of two dissipatively coupled quantum van der Pol oscillators.

pub mod error;
pub mod harness;
pub mod hilbert;
pub mod linalg;
pub mod lindblad;
pub mod meanfield;
pub mod pulses;
pub mod syncmetrics;
pub mod tomography;

pub use error::{Error, Result};
