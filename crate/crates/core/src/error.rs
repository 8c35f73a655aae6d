use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate surface: parameter vector norm {norm:e} is below 1e-12 or non-finite")]
    DegenerateSurface { norm: f64 },

    #[error("degenerate plane: {0}")]
    DegeneratePlane(&'static str),

    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),

    #[error("invalid footprint: {0}")]
    InvalidFootprint(String),

    #[error("invalid region annotation {id}: {reason}")]
    InvalidAnnotation { id: u32, reason: String },

    #[error("degenerate sample configuration (condition number {cond:e})")]
    DegenerateConfiguration { cond: f64 },

    #[error("no consensus: best inlier ratio {ratio:.3} below floor {floor:.3}")]
    NoConsensus { ratio: f64, floor: f64 },

    #[error("region {id} covers only {valid} valid pixels (need at least 3)")]
    EmptyRegion { id: u32, valid: usize },

    #[error("no cluster reached the minimum pixel fraction")]
    NoInstances,

    #[error("prediction and ground truth share no valid pixels")]
    EmptyOverlap,

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch { left: (usize, usize), right: (usize, usize) },

    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: usize, trace: Vec<f64> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("missing field {0:?}")]
    MissingField(String),

    #[error("corrupt raster {path}: {reason}")]
    CorruptRaster { path: PathBuf, reason: String },

    #[error("intrinsics declare {declared:?} but {path} is {actual:?}")]
    IntrinsicsMismatch { path: PathBuf, declared: (usize, usize), actual: (usize, usize) },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::DegenerateSurface { .. }
                | Error::DegeneratePlane(_)
                | Error::DegenerateConfiguration { .. }
                | Error::NoConsensus { .. }
                | Error::NoInstances
                | Error::NonFiniteLoss { .. }
        )
    }

    /// Stable name of the variant, for machine-readable error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateSurface { .. } => "degenerate_surface",
            Error::DegeneratePlane(_) => "degenerate_plane",
            Error::InvalidIntrinsics(_) => "invalid_intrinsics",
            Error::InvalidFootprint(_) => "invalid_footprint",
            Error::InvalidAnnotation { .. } => "invalid_annotation",
            Error::DegenerateConfiguration { .. } => "degenerate_configuration",
            Error::NoConsensus { .. } => "no_consensus",
            Error::EmptyRegion { .. } => "empty_region",
            Error::NoInstances => "no_instances",
            Error::EmptyOverlap => "empty_overlap",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::MissingField(_) => "missing_field",
            Error::CorruptRaster { .. } => "corrupt_raster",
            Error::IntrinsicsMismatch { .. } => "intrinsics_mismatch",
            Error::Json { .. } => "json",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
