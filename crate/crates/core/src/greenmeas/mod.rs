//! Green function, equilibrium-measure samplers, Julia membership and tube masses.

mod green;
mod sample;
mod tube;

pub use green::{fit_green_holder, julia_membership, julia_membership_f64, GreenEvaluator, JuliaClass, JuliaOptions};
pub use sample::{
    default_seed, exact_measure, exact_quadrature, preimage_tree, preimage_tree_product, sample_backward,
    sample_backward_chains, ExactKind, MeasureSample, Provenance, CI_BATCHES, DEFAULT_ATOM_CAP, DEFAULT_CHAINS,
};
pub use tube::{moderateness_fit, tube_battery, tube_mass, ModerateFit, TubeQuery, TubeTrial};
