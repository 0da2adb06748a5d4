//! Pipeline driver for the compound-hazard district twin: configuration,
//! artifact files, the stage runner and the manifest. The numerics live in
//! `hazard-twin-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod config;
pub mod error;
pub mod manifest;
pub mod stages;

pub use config::PipelineConfig;
pub use error::{TwinError, TwinResult};
pub use stages::{run_pipeline, run_stage, write_summary, Stage, StageRun, Summary};
