//! Forward rank-dependent performance criteria in a complete market with
//! deterministic coefficients.

pub mod backward;
pub mod distortion;
pub mod error;
pub mod forward_utility;
pub mod interp;
pub mod market;
pub mod normal;
#[cfg(test)]
mod oracle;
pub mod prospect;
pub mod quadrature;
pub mod rdu;
pub mod simulate;
pub mod stats;
pub mod utility;
pub mod verify;

pub use error::{Error, Result};
