use std::path::PathBuf;

/// Errors produced anywhere in the seam extraction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("unsupported format: {0}")]
    UnsupportedFormat(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid transform: {0}")]
    InvalidTransform(String),

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("at least 2 masks are required to build a seam ROI, got {0}")]
    TooFewMasks(usize),

    #[error("unorganized cloud cannot be cropped without camera intrinsics")]
    MissingCorrespondence,

    #[error("degenerate neighborhood around point {0}")]
    DegenerateNeighborhood(usize),

    #[error("cloud has no normals/curvatures; run feature estimation first")]
    MissingFeatures,

    #[error("no weld seams found")]
    NoSeamsFound,

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("curve fit rejected: rms residual {rms_mm:.3} mm exceeds {tol_mm:.3} mm")]
    FitRejected { rms_mm: f64, tol_mm: f64 },

    #[error("invalid workpiece spec: {0}")]
    InvalidSpec(String),

    #[error("no ground-truth seam within {radius_mm} mm of the path")]
    UnmatchedSeam { radius_mm: f64 },

    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
