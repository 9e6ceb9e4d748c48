//! Experiment harness around `anisocanon`: task configs, dataset and
//! checkpoint files, cross-validated training, search-strategy comparison
//! and invariance audits. The `anisocanon` binary exposes the same steps.
pub mod config;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod formats;
pub mod models;
pub mod report;
pub mod spectra;
pub mod train;

pub use error::{LabError, LabResult};
