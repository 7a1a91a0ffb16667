use std::path::PathBuf;

use thiserror::Error;

use crate::image::BoundingBox;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter vector has length {got}, expected {expected}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid genome: {0}")]
    InvalidGenome(String),

    #[error("grid side {side:.3} px is below 3 px for person box {person} at l={l}")]
    DegenerateScale { person: BoundingBox, l: f64, side: f64 },

    #[error("scene `{0}` has no person boxes to attack")]
    NoTarget(String),

    #[error("detector transport: {0}")]
    Transport(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    #[error("infeasible configuration: {0}")]
    Infeasible(String),

    #[error("search space of {evaluations} detector evaluations exceeds the limit of {limit}")]
    SearchTooLarge { evaluations: u64, limit: u64 },

    #[error("failed to load `{entry}`: {reason}")]
    Load { entry: String, reason: String },

    #[error("synthetic scene generation failed: {0}")]
    Generation(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("malformed document {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

/// Coarse failure class, used by the command-line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Usage,
    Data,
    Transport,
    Infeasible,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Data => "data",
            Category::Transport => "transport",
            Category::Infeasible => "infeasible",
        }
    }
}

impl Error {
    pub fn category(&self) -> Category {
        match self {
            Error::Dimension { .. } | Error::InvalidGenome(_) | Error::Argument(_) | Error::SearchTooLarge { .. } => {
                Category::Usage
            }
            Error::Transport(_) => Category::Transport,
            Error::DegenerateScale { .. } | Error::Infeasible(_) | Error::Generation(_) => Category::Infeasible,
            Error::NoTarget(_)
            | Error::UndefinedMetric(_)
            | Error::Load { .. }
            | Error::Io { .. }
            | Error::Image { .. }
            | Error::Json { .. } => Category::Data,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
