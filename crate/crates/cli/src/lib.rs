//! Plumbing behind the `snbody` binary: run configuration, the
//! end-to-end pipeline, archive serialization, and the verification
//! suite. Everything here is a thin, deterministic layer over the core
//! library so integration tests can drive runs in-process.

pub mod archive;
pub mod checks;
pub mod config;
pub mod pipeline;

pub use archive::{ArchiveMeta, TensorArchive, ARCHIVE_FILES, KAPPA_CONVENTION, SCHEMA_VERSION};
pub use checks::{run_checks, CheckLine, CheckReport};
pub use config::{parse_delta, thread_cap, CheckKind, ModelSource, RunConfig};
pub use pipeline::{render_beta_csv, render_frequencies_csv, run_pipeline};

use thiserror::Error;

/// Front-end failures. Check failures are not errors — they live in the
/// report — so everything here maps to the input-error exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// A core failure tagged with the pipeline stage that hit it.
    #[error("{stage} stage: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: snbody_core::Error,
    },

    #[error(transparent)]
    Core(#[from] snbody_core::Error),

    #[error("{0}")]
    Input(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Exit codes: 0 success, 1 check failure, 2 input or runtime error.
pub const EXIT_CHECK_FAILURE: i32 = 1;
pub const EXIT_INPUT_ERROR: i32 = 2;
