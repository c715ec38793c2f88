//! Spectral Galerkin simulation of the stochastic heat flow constrained to
//! the unit sphere of `L²`, with constraint-compatible rank-one noise.

pub mod constraint;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod galerkin;
pub mod noise;
pub mod spectral;

pub use error::{Error, Result};
