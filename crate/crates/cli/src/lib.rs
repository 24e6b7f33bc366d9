//! Command-line front end for the `tcem` solver: configuration parsing,
//! subcommands, and CSV/JSON output.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{Cli, Command};
pub use config::{parse_config, resolve, CliError, ConfigArgs};
pub use output::{emit_csv, parse_csv, RunManifest};
