//! Library side of the `qsmooth` binary: config parsing, subcommands and CSV
//! output, kept separate from `main` so they can be tested directly.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;

pub use commands::{run_command, Command};
pub use config::ScenarioConfig;
pub use csv::Table;
pub use error::CliError;
