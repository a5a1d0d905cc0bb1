//! Workspace commands: dataset generation, curation, training, sampling,
//! reconstruction and evaluation.

pub mod commands;
pub mod config;
pub mod workspace;

pub use commands::{run_e2e, run_stage, DatasetEntry, DatasetIndex, E2eSummary, RunOptions, StageOutcome, TrainSummary};
pub use config::{PipelineConfig, ReconstructSource, CONFIG_SCHEMA_VERSION};
pub use workspace::{derive_seed, MarkerStatus, Stage, StageMarker, Workspace, WorkspaceManifest};
