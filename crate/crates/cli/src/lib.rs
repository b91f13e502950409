//! Scenario runner for the stochastic flow solvers: JSON configs in,
//! CSV/JSON/PNG artifacts plus a metadata record out.

pub mod config;
pub mod error;
pub mod fields;
pub mod plot;
pub mod runner;

pub use config::ScenarioConfig;
pub use error::CliError;
pub use runner::{run_scenario, RunOptions, RunSummary};
