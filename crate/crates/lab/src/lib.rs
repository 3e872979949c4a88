//! Scenario files, the built-in scenario library, run configuration, output
//! formats and the subcommands of the `feller-lab` binary.

pub mod commands;
pub mod config;
pub mod error;
pub mod exec;
pub mod library;
pub mod output;
pub mod schema;

pub use commands::{run, Command, Common, Outcome, ProbeKind};
pub use config::RunConfig;
pub use error::LabError;
pub use exec::RayonExecutor;
pub use schema::{load_scenario, Overrides, ScenarioFile};
