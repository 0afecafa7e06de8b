//! Hafnians, loop hafnians, permanents and output-pattern probabilities.

mod lhafmix;
mod probability;
mod reference;

pub(crate) use reference::binomial;

pub use lhafmix::{build_xz, greedy_pairing, lhafmix, lhafmix_with, mixed_pairing, power_traces, PairSpec};
pub use probability::{pattern_probability, ProbabilityKernel};
pub use reference::{hafnian_reference, loop_hafnian_reference, permanent, permanent_repeated, SymmetricComplexMatrix};
