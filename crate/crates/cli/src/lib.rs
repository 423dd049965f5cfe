//! Configuration-driven experiment runner for the `smallball` library.
//!
//! Every subcommand reads an [`ExperimentConfig`](config::ExperimentConfig),
//! writes its tables as CSV into the output directory and records a JSON
//! manifest next to them.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod plotdata;

pub use error::{CliError, CliResult};
