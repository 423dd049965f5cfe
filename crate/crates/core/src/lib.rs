// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod coefficients;
pub mod error;
pub mod estimator;
pub mod girsanov;
pub mod kernel;
pub mod noise;
mod parallel;
pub mod profile;
pub mod quadrature;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
