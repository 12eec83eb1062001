//! Scenario runner for the wfprop laboratory: validated configs, CSV and JSON
//! output, SVG plots and the registry of numerical experiments.

pub mod config;
pub mod error;
pub mod output;
pub mod plot;
pub mod report;
pub mod scenarios;

pub use config::{ScenarioConfig, CONFIG_VERSION};
pub use error::HarnessError;
pub use report::{Criterion, RunSummary, Threshold};
pub use scenarios::{list_scenarios, registry, run_scenario};
