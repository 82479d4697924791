//! Scenario configuration, run orchestration, diagnostics and file I/O for
//! the stochastic wind-flow simulator in `stochwind-core`.

pub mod config;
pub mod diag;
pub mod engine;
pub mod output;

pub use config::ScenarioConfig;
pub use engine::{RunMode, RunOutput, Simulation};
