//! Parabolic coarse-graining laboratory.

pub mod coarsegrain;
pub mod error;
pub mod experiment;
pub mod fields;
pub mod geometry;
pub mod matalg;
pub mod multiscale;
pub mod pde;
pub mod renorm;

pub use error::{Error, Result};
