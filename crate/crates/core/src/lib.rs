//! Numerical laboratory for equidistribution of preimages and periodic points
//! of holomorphic endomorphisms of P¹ (and products P¹ × P¹).
//!
//! The crate is organised bottom-up: [`mpnum`] provides multiprecision complex
//! arithmetic and root finding, [`dynsys`] the maps themselves, [`greenmeas`]
//! Green functions and equilibrium-measure samplers, [`percyc`] periodic
//! points, [`manhattan`] inverse branches over cell coverings, and
//! [`equidist`] discrepancy pairings and rate fits.

pub mod dynsys;
pub mod equidist;
pub mod error;
pub mod greenmeas;
pub mod manhattan;
pub mod mpnum;
pub mod par;
pub mod percyc;
pub mod stats;

pub use error::{Error, Result};

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
