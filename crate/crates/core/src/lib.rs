//! Test-time scaling for vision-language model decoding: augmentation,
//! per-step aggregation, test-time adaptation, baselines, analysis and
//! evaluation utilities.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adapt;
pub mod baselines;
pub mod cli;
pub mod decoder;
pub mod error;
pub mod evalkit;
pub mod generator;
pub mod imageaug;
pub mod inputs;
pub mod textaug;
pub mod theory;
pub mod types;

pub use error::{Error, Result};
