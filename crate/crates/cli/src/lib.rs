//! Command-line driver: problem files in, CSV and JSON artifacts out.
//!
//! Exit codes: 0 ok, 1 a verification failed, 2 bad input or
//! configuration, 3 sign constraint violated, 4 Riccati blow-up.

pub mod commands;
pub mod config;
mod tables;

pub use commands::{run, CliError, Exit};
pub use config::{Cli, CommandKind, RunConfig};
