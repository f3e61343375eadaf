//! Experiment orchestration: JSON config, figure presets, CSV artifacts.

mod config;
mod run;
mod table;

pub use config::{load_config, parse_config, ScenarioConfig};
pub use run::{
    default_out_dir, run_id, run_scenario, Preset, RunArtifact, DEFAULT_ROC_TRIALS,
    DEFAULT_ZETA_TRIALS, DYNAMIC_RANGE_HEADER, OUT_DIR_ENV, RADIATION_HEADER, ROC_HEADER,
};
pub use table::{emit_csv, format_sig12, Cell, Table};
