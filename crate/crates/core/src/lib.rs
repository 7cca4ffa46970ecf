//! Differentially private training of generalized linear models with a mix
//! of public and private data.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`]: vectors, a small dense matrix type, thin SVD, quantiles,
//!   the normal CDF and reproducible Gaussian streams.
//! * [`accountant`]: Gaussian DP / zCDP conversions, composition and step
//!   calibration.
//! * [`problems`]: GLM losses, clipping, projection and synthetic data.
//! * [`optimizer`]: NoisyGD, one-pass SGD and the two AdaMix variants.
//! * [`pdp_ledger`]: per-example privacy accounting.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod accountant;
pub mod error;
pub mod numerics;
pub mod optimizer;
pub mod pdp_ledger;
pub mod problems;

pub use error::{Error, Result};
