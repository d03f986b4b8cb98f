//! Pseudo-spectral Elsässer MHD solver with local-energy and comparison-function diagnostics.

pub mod comparison;
pub mod config;
pub mod container;
pub mod data;
pub mod energy;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod run;
pub mod solver;
mod spectral;
pub mod verify;

pub use error::{Error, Result};
