//! Batch front end for the QKD models: configuration resolution, sweeps,
//! Monte Carlo vs closed-form comparison, CSV/SVG output and a run ledger.

pub mod commands;
pub mod config;
pub mod error;
pub mod ledger;
pub mod report;
pub mod svg;

pub use config::{ConfigFile, ProtocolSelection, Range, Settings};
pub use error::{CliError, Result};
