//! Scenario files, replicated sweeps, result files and slot traces on top
//! of `ecasim-core`.

pub mod output;
pub mod scenario;
pub mod sweep;
pub mod trace;

pub use scenario::{parse_scenario, parse_scenario_str, parse_scenario_with, Overrides, Point, Population, Scenario, ScenarioError, SweepRange};
pub use sweep::{run, run_point, sweep, Execution, PointResult, ReplicationSummary, ResultRow, SweepError, SweepSink};
