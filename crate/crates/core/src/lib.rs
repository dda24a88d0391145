//! Competitive-code palmprint features, class-specific matching and the
//! statistical tools used to study them.

// `!(x > 0.0)` is used on purpose so that NaN parameters are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coding;
pub mod error;
pub mod eval;
pub mod filterbank;
pub mod matching;
pub mod scalar;
pub mod stats;
pub mod store;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type FilterBankF64 = filterbank::FilterBank<f64>;
pub type FilterBankF32 = filterbank::FilterBank<f32>;
pub type GaborFilterF64 = filterbank::GaborFilter<f64>;
pub type GaborFilterF32 = filterbank::GaborFilter<f32>;
pub type FieldStatisticsF64 = stats::FieldStatistics<f64>;
pub type FieldStatisticsF32 = stats::FieldStatistics<f32>;
