//! Command-line layer for `mixsdr`: schema-driven data loading, run
//! configuration, output files and the subcommands themselves.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod predict;
pub mod schema;

pub use commands::{run, Outcome};
pub use config::{Command, RunConfig};
pub use error::CliError;
pub use schema::{load_dataset, read_dataset, write_dataset, DataSchema, ResponseType};
