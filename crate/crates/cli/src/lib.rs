//! Batch front end: power curves, tests and confidence sets on CSV data,
//! conditional critical values and optimizer diagnostics, all written as CSV.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod sim;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
