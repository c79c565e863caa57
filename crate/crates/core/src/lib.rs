//! Spectral closure laboratory for homogeneous isotropic turbulence.

pub mod closure;
pub mod dissipation_law;
pub mod error;
pub mod evolve;
pub mod flux;
pub mod grid;
pub mod realspace;
pub mod reference;
pub mod rg;
pub mod scaling;
pub mod spectra;
pub mod temporal;

pub use error::{Error, Result};
