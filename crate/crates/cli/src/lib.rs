//! Command-line surface for `oob-bands`: dataset and model I/O, run
//! configuration documents, and CSV result tables.

pub mod app;
pub mod config;
pub mod dataset;
pub mod results;

pub use app::{cli_main, run, CliError};
pub use config::{parse_config, parse_config_str, RunConfig};
pub use dataset::read_dataset;
pub use results::{format_real, read_results, write_results, ResultRow};
