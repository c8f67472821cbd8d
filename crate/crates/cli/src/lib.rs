//! Command-line front end: configuration parsing, the end-to-end pipeline,
//! result files and synthetic input bundles.

pub mod config;
pub mod error;
pub mod output;
pub mod pipeline;
pub mod synthetic;

pub use error::{CliError, Result};
