//! Synthetic lifecycle generator, simulated learning workload and the
//! benchmark harness.

pub mod bench;
mod dataset;
mod lifecycle;
mod params;
pub mod specs;
mod workload;

use thiserror::Error;

pub use dataset::{
    count_dataset, generate_into, generate_store, registry_for, CountingSink, Manifest, StoreSink, TripleSink,
};
pub use lifecycle::{
    Basin, EpochTruth, Field, LearningRun, Lifecycle, Preparation, RawFile, StageTruth, GENERATOR_CLIENT, N_FILES,
};
pub use params::SyntheticParams;
pub use workload::{run_workload, WorkloadConfig, DEFAULT_BATCH_SLEEP};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Spec(#[from] crate::spec::SpecError),
    #[error(transparent)]
    Translate(#[from] crate::manager::TranslateError),
    #[error(transparent)]
    Capture(#[from] crate::capture::CaptureError),
    #[error(transparent)]
    Query(#[from] crate::queries::QueryError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
