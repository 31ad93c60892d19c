//! Command-line front end for `ivqr-core`: CSV ingestion, layered
//! configuration, the `estimate`/`ci`/`identify`/`simulate`/`mc` commands
//! and their JSON reports.

pub mod commands;
pub mod config;
pub mod design;
pub mod error;
pub mod io;
pub mod report;
pub mod table;

pub use config::{Cli, Command, RunConfig};
pub use error::{CliError, CliResult};
pub use io::load_csv;
