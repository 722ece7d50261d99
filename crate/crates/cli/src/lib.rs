//! Command-line front end and experiment harness.
//!
//! * [`config`]: the TOML experiment schema.
//! * [`harness`]: multi-seed runs, result records and aggregate tables.
//! * [`commands`]: the `hosl` subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod harness;

pub use error::{CliError, CliResult};
