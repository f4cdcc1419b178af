//! Spectral, lattice and Gaussian analysis of lazy random walks on `Z/pZ`
//! driven by small symmetric generating sets.

pub mod arith;
pub mod clt;
pub mod error;
pub mod experiments;
pub mod genset;
pub mod lattice;
pub mod numeric;
pub mod power2;
pub mod rng;
pub mod theta;
pub mod walk;

pub use error::{Error, Result};
pub use genset::GenSet;
pub use walk::{CyclicMeasure, SpectralProfile, Walk};
