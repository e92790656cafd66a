use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("frame `{id}` belongs to the {domain} domain, expected target")]
    NotTargetDomain { id: String, domain: String },

    #[error("no source point within {tolerance} m of range {range} m")]
    NoMatchingRange { range: f64, tolerance: f64 },

    #[error("prediction #{index} has no score")]
    MissingScore { index: usize },

    #[error("prediction #{index} is not a pseudo label")]
    NotPseudo { index: usize },

    #[error("no ground-truth boxes of class `{class}`; AP is undefined")]
    NoGroundTruth { class: String },

    #[error("closed gap is undefined when oracle AP equals source-only AP ({0})")]
    ZeroGap(f64),

    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },

    #[error("{}: schema violation at {json_path}: {message}", path.display())]
    Schema {
        path: PathBuf,
        json_path: String,
        message: String,
    },

    #[error("manifest references {} missing file(s): {}", missing.len(), join_paths(missing))]
    MissingFiles { missing: Vec<PathBuf> },

    #[error("duplicate frame id `{0}` in manifest")]
    DuplicateId(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Empty(_) => "empty_input",
            Error::NotTargetDomain { .. } => "not_target_domain",
            Error::NoMatchingRange { .. } => "no_matching_range",
            Error::MissingScore { .. } => "missing_score",
            Error::NotPseudo { .. } => "not_pseudo",
            Error::NoGroundTruth { .. } => "no_ground_truth",
            Error::ZeroGap(_) => "zero_gap",
            Error::Format { .. } => "format",
            Error::Schema { .. } => "schema",
            Error::MissingFiles { .. } => "missing_files",
            Error::DuplicateId(_) => "duplicate_id",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub fn is_config_error(&self) -> bool {
        matches!(self, Error::Config(_))
    }
}

fn join_paths(paths: &[PathBuf]) -> String {
    paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}
