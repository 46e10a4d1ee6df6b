//! Scenario loading, closed-loop runs, baselines and metrics.

pub mod config;
pub mod measurement;
pub mod metrics;
pub mod pi;
pub mod run;
pub mod strategy;

pub use config::{bundled_scenario, load_scenario, parse_scenario, ControllerKind, ScenarioSpec};
pub use metrics::{compute_metrics, RunMetrics, Trajectory};
pub use run::{
    execute, execute_with, run_scenario, write_outputs, RunOptions, RunOutcome, TrajectoryRow,
};
pub use strategy::{ControlContext, ControlOutput, SecondaryController, StrategyRegistry};
