//! Scenario files, experiment runner and CSV output for the regulation
//! library in `ipareg-core`.
//!
//! A scenario is a TOML document naming a plant, a controller, setpoints and
//! reporting windows. [`run_scenario`] executes it (replications in
//! parallel) and [`write_reports`] stores one trace per run with columns
//! `n,u,y,e,A,deriv,r`.

pub mod output;
pub mod runner;
pub mod scenario;

pub use output::{emit_plot_data, write_plot_csv, write_reports, write_trace_csv, OutputError};
pub use runner::{
    compare_fixed_gain, convergence_cycle, run_scenario, segment_outcomes, ControllerOutcome,
    GainComparison, RunError, RunId, RunReport, SegmentMean, SegmentOutcome,
};
pub use scenario::{
    bundled, load_scenario, parse_scenario, resolve, Lane, PlantSpec, ReportSpec, Scenario,
    ScenarioError, BUNDLED, SCHEMA_VERSION,
};
