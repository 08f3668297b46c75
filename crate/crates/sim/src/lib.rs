//! Experiment runner for the `demandplan-core` models.
//!
//! Loads TOML experiment configurations, runs compression-ratio sweeps of
//! the cell-switching and interference models, executes the demand-planning
//! pipeline, ingests CDR traffic records and renders SVG charts. The `dpsim`
//! binary is a thin command-line layer over this crate.

// Validation is written as `!(x >= lo)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chart;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod sweep;

pub use config::ExperimentConfig;
pub use error::{Result, SimError};
