//! Command-line front end for `warpfit`: CSV ingestion, TOML run
//! configuration, the `fit`, `sample` and `simulate` commands, and their
//! report files.

pub mod commands;
pub mod config;
pub mod error;
pub mod ingest;
pub mod report;
pub mod select;

pub use commands::{cmd_fit, cmd_sample, cmd_simulate, cmd_validate, run, RunOutput};
pub use config::{Command, RunConfig};
pub use error::{CliError, CliResult};
pub use ingest::{ingest_csv, Ingested};
pub use report::Report;
pub use select::{aic, model_select, AicRow};
