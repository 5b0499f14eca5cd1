//! Numerical laboratory for a relativistic charged particle coupled to a
//! massless scalar field through a smooth, neutral charge distribution.

pub mod charge;
pub mod config;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod output;
pub mod quad;
pub mod soliton;
pub mod spectral;
pub mod symplectic;

pub use error::{Error, Result};
