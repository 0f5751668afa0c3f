//! Experiment driver for the crsched simulator: config parsing, sweep
//! execution with replications, CSV reports, and a verification suite
//! backed by the brute-force oracles.

pub mod experiment;
pub mod schema;
pub mod verify;

pub use experiment::{
    configure_workers, lambda_grid_for_loads, plan_points, preset, run_experiment,
    su_service_moments, ExperimentOutput,
};
pub use schema::{load, parse_str, Experiment, SweepVariable};
pub use verify::{render_checks, verify, Check};
