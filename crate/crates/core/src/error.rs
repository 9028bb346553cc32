//! Error type shared by every module of the toolkit.

use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// The file is not a NIfTI-1 single file (bad magic, bad size field,
    /// NIfTI-2, or a `.hdr`/`.img` pair).
    #[error("not a NIfTI-1 file: {0}")]
    NotNifti(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("dimension error: {0}")]
    DimensionError(String),

    #[error("I/O error{}: {source}", path.as_ref().map(|p| format!(" ({})", p.display())).unwrap_or_default())]
    Io {
        #[source]
        source: std::io::Error,
        path: Option<PathBuf>,
    },

    /// A direction column has two equal-magnitude dominant components, or the
    /// nearest-axis assignment is not a permutation.
    #[error("ambiguous orientation: {0}")]
    AmbiguousOrientation(String),

    #[error("trilinear interpolation requested on a label grid")]
    LabelInterpolation,

    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: [usize; 3],
        right: [usize; 3],
    },

    #[error("probability {0} outside [0, 1]")]
    OutOfRangeProbability(f64),

    #[error("{} PSMA record(s) lack metrics: {}", .0, ids_preview(.1))]
    MissingMetrics(usize, Vec<String>),

    #[error("percentile {0} outside the open interval (0, 100)")]
    PercentileOutOfRange(f64),

    #[error("{} excluded record(s) lack a sickness label: {}", .0, ids_preview(.1))]
    MissingLabels(usize, Vec<String>),

    #[error("malformed sample id {0:?}: {1}")]
    MalformedId(String, String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("empty distribution")]
    EmptyDistribution,

    #[error("selection is empty: {0}")]
    EmptySelection(String),

    #[error("lesion out of bounds: {0}")]
    LesionOutOfBounds(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("expected a {expected} grid for {op}")]
    KindMismatch {
        op: &'static str,
        expected: &'static str,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(source: std::io::Error, path: impl Into<PathBuf>) -> Self {
        Error::Io {
            source,
            path: Some(path.into()),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(source: std::io::Error) -> Self {
        Error::Io { source, path: None }
    }
}

fn ids_preview(ids: &[String]) -> String {
    const SHOWN: usize = 8;
    if ids.len() <= SHOWN {
        ids.join(", ")
    } else {
        format!("{}, … ({} more)", ids[..SHOWN].join(", "), ids.len() - SHOWN)
    }
}
