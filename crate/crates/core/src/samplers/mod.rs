//! Sample generation for ideal, lossy, distinguishable and mockup models.
//!
//! Every sampler draws sample `i` from its own stream `RngStream(seed, i)`,
//! so the output is identical for any worker count.

mod chain;
mod mockups;
mod models;
mod set;

pub use chain::{chain_rule_sample, ChainRuleSampler, ChainTrace};
pub use mockups::{
    categorical_sample, coherent_amplitudes, coherent_probabilities, sample_coherent, sample_squashed, sample_thermal, squashed_covariance,
    thermal_probabilities,
};
pub use models::{
    distinguishable_states, ideal_state, lossy_state, sample_distinguishable, sample_ideal, sample_lossy,
    LossMethod, VirtualMethod,
};
pub use set::{mean_photon_ratio, ModelTag, SampleHeader, SampleSet};
