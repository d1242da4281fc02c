//! Library surface of the `fourwis` command-line tool: configuration, the
//! dataset directory format, and the four command implementations
//! (`simulate`, `calibrate`, `estimate`, `compare`). The binary in `main.rs`
//! is a thin argument-parsing wrapper over this module so integration tests
//! can drive commands directly.

// `!(x > y)` on floats deliberately routes NaN into the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;

pub use error::CliError;
