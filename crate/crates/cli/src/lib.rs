//! Library side of the `csmc` command: scenario files and the subcommands
//! that turn them into CSV/JSON artifacts.

pub mod commands;
pub mod scenario;

pub use commands::{cmd_compare, cmd_deviation, cmd_run, Analysis, CliError};
