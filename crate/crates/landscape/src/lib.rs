//! File formats, experiment pipelines and the command-line front end built
//! on `landscape-core`.
//!
//! * [`idx`]: IDX image/label tensors (optionally gzip-compressed).
//! * [`checkpoint`]: network checkpoints (TOML manifest + raw `f32` payload).
//! * [`datafile`]: dataset files in the same layout.
//! * [`config`]: experiment configuration files.
//! * [`experiment`]: `run_experiment`, producing checkpoints, CSVs and a JSON
//!   run manifest.

pub mod checkpoint;
pub mod config;
pub mod datafile;
pub mod experiment;
pub mod idx;
pub mod output;

pub use landscape_core as core;

use landscape_core::data::DataError;
use landscape_core::geometry::GeometryError;
use landscape_core::probes::ProbeError;
use landscape_core::symmetry::{AssignmentError, SymmetryError};
use landscape_core::train::TrainError;
use landscape_core::NnError;

/// Process exit codes of the command-line tool.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const NUMERIC: i32 = 3;
    pub const IO: i32 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Idx(#[from] idx::IdxError),
    #[error(transparent)]
    Checkpoint(#[from] checkpoint::CheckpointError),
    #[error(transparent)]
    DatasetFile(#[from] datafile::DatasetFileError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error("{0}")]
    Usage(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        match self {
            Error::Stage { .. } => self,
            other => Error::Stage {
                stage: stage.into(),
                source: Box::new(other),
            },
        }
    }

    /// Stage name of a stage-tagged error.
    pub fn stage(&self) -> Option<&str> {
        match self {
            Error::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }

    /// Exit code: 2 for configuration errors, 3 for numeric or convergence
    /// failures, 4 for I/O and file-format errors (including an unreadable
    /// config file).
    pub fn exit_code(&self) -> i32 {
        use exit::*;
        match self {
            Error::Config(config::ConfigError::Io { .. }) => IO,
            Error::Config(_) | Error::Usage(_) => CONFIG,
            Error::Io { .. }
            | Error::Idx(_)
            | Error::Checkpoint(_)
            | Error::DatasetFile(_)
            | Error::Csv(_)
            | Error::Json(_) => IO,
            Error::Nn(e) => nn_code(e),
            Error::Data(e) => match e {
                DataError::Nn(e) => nn_code(e),
                DataError::ZeroVariance => NUMERIC,
                _ => CONFIG,
            },
            Error::Train(e) => train_code(e),
            Error::Symmetry(e) => symmetry_code(e),
            Error::Geometry(e) => geometry_code(e),
            Error::Probe(e) => match e {
                ProbeError::Nn(e) => nn_code(e),
                ProbeError::Train(e) => train_code(e),
                ProbeError::Symmetry(e) => symmetry_code(e),
                ProbeError::Geometry(e) => geometry_code(e),
                ProbeError::Config(_) | ProbeError::ArchitectureMismatch => CONFIG,
                ProbeError::NonConvergence { .. } | ProbeError::DegeneratePlane => NUMERIC,
            },
            Error::Stage { source, .. } => source.exit_code(),
        }
    }
}

fn nn_code(e: &NnError) -> i32 {
    match e {
        NnError::NonFinite { .. } => exit::NUMERIC,
        _ => exit::CONFIG,
    }
}

fn train_code(e: &TrainError) -> i32 {
    match e {
        TrainError::Nn(e) => nn_code(e),
        TrainError::Data(DataError::ZeroVariance) => exit::NUMERIC,
        TrainError::Data(_) | TrainError::Config(_) | TrainError::LossArity { .. } => exit::CONFIG,
        TrainError::NonFiniteLoss | TrainError::Diverged { .. } => exit::NUMERIC,
    }
}

fn symmetry_code(e: &SymmetryError) -> i32 {
    match e {
        SymmetryError::Nn(e) => nn_code(e),
        SymmetryError::Assignment(AssignmentError::NonFinite { .. }) | SymmetryError::DegenerateUnit { .. } => {
            exit::NUMERIC
        }
        _ => exit::CONFIG,
    }
}

fn geometry_code(e: &GeometryError) -> i32 {
    match e {
        GeometryError::Nn(e) => nn_code(e),
        GeometryError::OffSphere { .. }
        | GeometryError::Antipodal
        | GeometryError::AntipodalUnit { .. }
        | GeometryError::Sphere { .. } => exit::NUMERIC,
        _ => exit::CONFIG,
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
