use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the separation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("signal too short: {len} samples for frame length {frame_len}")]
    SignalTooShort { len: usize, frame_len: usize },

    #[error("window/hop pair does not satisfy constant overlap-add (frame_len {frame_len}, hop {hop})")]
    NotCola { frame_len: usize, hop: usize },

    #[error("stft configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("insufficient frames: need at least {needed}, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("sinkhorn diverged at iteration {iteration}")]
    SinkhornDiverged { iteration: usize },

    #[error("singular system for source {source_index} at frequency {freq}")]
    Singular { source_index: usize, freq: usize },

    #[error("non-finite value during separation at iteration {iteration}: {what}")]
    NonFinite { iteration: usize, what: String },

    #[error("separation failed at iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("reference {0} has zero energy")]
    ZeroEnergyReference(usize),

    #[error("too many sources for permutation search: {0} (max 4)")]
    TooManySources(usize),

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("wav error for {path}: {source}")]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("unsupported wav encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable identifier, used for machine-parsable CLI output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::SignalTooShort { .. } => "signal_too_short",
            Error::NotCola { .. } => "not_cola",
            Error::ConfigMismatch(_) => "config_mismatch",
            Error::InsufficientFrames { .. } => "insufficient_frames",
            Error::SinkhornDiverged { .. } => "sinkhorn_diverged",
            Error::Singular { .. } => "singular",
            Error::NonFinite { .. } => "non_finite",
            Error::Iteration { .. } => "iteration",
            Error::ZeroEnergyReference(_) => "zero_energy_reference",
            Error::TooManySources(_) => "too_many_sources",
            Error::Geometry(_) => "geometry",
            Error::Wav { .. } => "wav",
            Error::UnsupportedEncoding(_) => "unsupported_encoding",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
