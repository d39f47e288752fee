//! Pipeline orchestration behind the `slicereg` command: configuration,
//! slice directories, persisted stage outputs and the full run.

pub mod config;
pub mod errors;
pub mod pipeline;
pub mod schema;
pub mod stack;

pub use config::PipelineConfig;
pub use pipeline::{run_pipeline, RunOutcome};
