//! Scenario files, canonical generators and experiment sweeps.

pub mod experiment;
pub mod grid;
pub mod io;

pub use experiment::{
    emit_plotdata, preset, rows_to_csv, run_experiment, CompareMode, ExperimentSpec, ResultRow,
    ScenarioSource, Sweep, SweepVar,
};
pub use grid::{generate_grid_scenario, toy_scenario, GridConfig, SessionLayout};
pub use io::{load_scenario, save_scenario, scenario_from_json, scenario_to_json, ScenarioDoc};
