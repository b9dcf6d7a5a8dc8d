//! Model implementations: the two ecological integrated model families, toy
//! reference models used for verification, data schemas and the synthetic
//! dataset simulator.

pub mod data;
pub mod dist;
pub mod herons;
pub mod owls;
pub mod simulate;
pub mod toys;

use rand::RngCore;
use rand_distr::Distribution;

pub(crate) const LN_2PI: f64 = 1.8378770664093453;

/// Normal log-density with standard-deviation parametrisation.
pub fn normal_ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * (LN_2PI + z * z) - sd.ln()
}

pub(crate) fn standard_normal(rng: &mut dyn RngCore) -> f64 {
    rand_distr::StandardNormal.sample(rng)
}
