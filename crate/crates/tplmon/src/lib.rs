//! Statistical machine-health monitoring for two-photon lithography.
//!
//! The crate ingests dimension measurements of printed test structures,
//! fits physics-informed radius/height models over the exposure dose,
//! and decides whether a machine's behavior has drifted — by direct
//! two-sample comparison, by testing against model predictions, or by
//! monitoring bootstrap distributions of the fitted parameters. A
//! synthetic process twin generates calibrated datasets for validation.

pub mod cell_monitor;
mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod hypothesis;
mod linalg;
pub mod models;
pub mod parameter_monitor;
pub mod prediction_monitor;
pub mod report;
pub mod rng;
pub mod special;
pub mod twin;
pub mod verdict;

pub use error::{Error, Result};

/// CLI entry point; returns the process exit code.
pub fn run() -> i32 {
    cli::run()
}
