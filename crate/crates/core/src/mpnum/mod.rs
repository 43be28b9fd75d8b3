//! Multiprecision complex arithmetic and the univariate polynomial kernel.

mod complex;
mod poly;
mod roots;

pub use complex::{ln_float, parse_float, BigComplex, BigReal, DEFAULT_PRECISION, MAX_PRECISION, MIN_PRECISION};
pub use poly::{Poly, DEFAULT_COMPOSITION_CAP};
pub use roots::{
    certification_level, cluster_radius, poly_roots, poly_roots_adaptive, poly_roots_with, RootOptions, RootSet,
};
