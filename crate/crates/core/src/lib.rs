//! # skylink-core
//!
//! Link-engineering models for quantum links that couple a free-space
//! turbulent horizontal path into single-mode fiber:
//!
//! - [`atmosphere`]: Fried parameter and `C_n²`, Rytov variance, aperture-averaged
//!   scintillation, Greenwood frequency
//! - [`zernike`]: Kolmogorov per-mode variance weights and residual phase after
//!   `J`-mode correction
//! - [`coupling`]: single-mode-fiber coupling efficiency and its factors
//! - [`linkbudget`]: beam divergence, absorption, collection and the full
//!   channel budget
//! - [`qkd`]: detection rates, QBER and 1-decoy finite-key secret key rate
//! - [`estimation`]: wavefront-sensor log ingestion, Fried-parameter fit and
//!   coupling prediction
//! - [`synth`]: seeded synthetic Zernike time series
//! - [`sweep`]: parameter sweeps over the efficiency chain
//!
//! Every efficiency is a linear ratio in `(0, 1]`; [`units::to_db`] is for
//! presentation only.

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod atmosphere;
pub mod coupling;
pub mod estimation;
pub mod linkbudget;
pub mod qkd;
pub mod sweep;
pub mod synth;
pub mod units;
pub mod zernike;

mod error;
pub use error::{Error, Result};
