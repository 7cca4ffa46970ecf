//! Experiment driver for the mixed public/private training library.
//!
//! Loads JSON configs, runs seeds in parallel, and writes traces, per-example
//! privacy ledgers and reports.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod pdp_report;
pub mod sweep;
pub mod verify;

pub use error::{HarnessError, Result};
