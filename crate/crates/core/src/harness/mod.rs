//! Scenario files, single runs, parameter sweeps and their reports.

mod config;
mod report;
mod sweep;

pub use config::{
    parse_config, parse_config_str, KernelConfig, ModelConfig, MpcSection, NetworkConfig, PerAgent, Scenario,
    ScenarioConfig, Weight, SCHEMA_VERSION,
};
pub use report::{
    emit_report, format_report, read_manifest, sha256_file, Artifact, Manifest, ManifestRun, CELLS_FILE,
    MANIFEST_FILE, SUMMARY_COLUMNS, SUMMARY_FILE,
};
pub use sweep::{
    run_policy, run_sweep, CellFailure, CellParams, PolicyKind, RunRecord, SweepOptions, SweepOutcome, SweepSpec,
};
