//! Stability Selection and Trimmed Stability Selection for sparse linear
//! models, with exact and Monte-Carlo breakdown-probability calculators and
//! a reproducible simulation harness.

pub mod bracket;
pub mod breakdown;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod resample;
pub mod rng;
pub mod selector;
pub mod stability;
pub mod synthdata;

pub use error::{Error, Result};
