//! Exact photon-number-resolving Gaussian boson sampling under loss and
//! partial distinguishability, with the statistics used to validate samples.

pub mod error;
pub mod exec;
pub mod gaussian;
pub mod linalg;
pub mod matchpoly;
pub mod oracle;
pub mod pattern;
pub mod rng;
pub mod samplers;
pub mod validation;

pub use error::{GbsError, Result};
pub use exec::Exec;
