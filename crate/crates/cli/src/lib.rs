//! Command-line front end: configuration, the `solve` and `diagnose` runners,
//! report emission and the built-in acceptance suite.

pub mod check;
pub mod config;
pub mod report;
pub mod run;

pub use check::{run_check, CheckOptions, CheckReport, Suite};
pub use config::{ConfigError, RunConfig, EXAMPLE_CONFIG};
pub use report::{CheckRow, RunReport, Table};
pub use run::{cmd_diagnose, cmd_solve, RunError};
