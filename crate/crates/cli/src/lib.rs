//! Config-driven runner for the covariant-form flows: builds the grid, the
//! bundle and the initial state for a scenario, runs structure checks or the
//! gradient flow, and writes CSV/JSON artifacts.

pub mod config;
pub mod error;
pub mod scenario;

pub use config::{load_config, parse_config, InitSpec, Scenario, ScenarioConfig};
pub use error::{CliError, Result};
pub use scenario::{run_scenario, RunOutcome};
