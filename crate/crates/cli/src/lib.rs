//! The `forge` command line: configuration, the staged pipeline, batches,
//! ablations and the subcommands wrapping each module.

pub mod ablate;
pub mod batch;
pub mod commands;
pub mod config;
pub mod inputs;
pub mod pipeline;

pub use ablate::{ablate, AblationTable, Knob};
pub use batch::{run_batch, BatchReport};
pub use commands::{execute, Cli, CliError};
pub use config::PipelineConfig;
pub use inputs::{load_input, load_inputs, InputSpec};
pub use pipeline::{execute as execute_pipeline, run_pipeline, RunManifest, Stage};
