//! Distribution-preserving k-anonymization of tabular microdata.
//!
//! Records are grouped by a greedy k-member clustering; each record's
//! quasi-identifiers are then replaced by a draw that depends only on its
//! cluster's value set (resampling, permutation, piecewise-uniform cell dither
//! or Gaussian dither followed by a Rosenblatt transform back onto the
//! empirical joint distribution). Evaluators measure reidentification risk and
//! the utility of the release for covariate-shift regression.

pub mod dataset;
pub mod dither;
pub mod error;
pub mod experiment;
pub mod kmember;
pub mod pipeline;
pub mod reid;
pub mod rng;
pub mod rosenblatt;
pub mod shiftlearn;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
