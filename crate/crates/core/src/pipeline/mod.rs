//! File formats, configuration, dataset assembly and the command-line front end.

pub mod cli;
pub mod config;
pub mod data;
pub mod experiment;
pub mod files;

pub use cli::cli_main;
pub use config::PipelineConfig;
pub use data::{build_dataset, calibrate_from_traces, calibration_points, split, SplitSpec};
pub use experiment::{run_experiment, ExperimentOutcome};
pub use files::{ingest_trace, read_calibrations, read_dataset, upsert_calibration, write_dataset, write_trace};
