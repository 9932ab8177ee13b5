use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid box [{x_min}, {y_min}, {x_max}, {y_max}]: {reason}")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
        reason: &'static str,
    },
    #[error("IoU undefined: both boxes have zero area")]
    DegenerateInput,
    #[error("overlap area ratio undefined: first box has zero area")]
    DegenerateBox,
    #[error("threshold {value} outside {expected}")]
    InvalidThreshold { value: f64, expected: &'static str },
    #[error("{name} = {value} outside its domain {expected}")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("embedding `{0}` is a zero vector")]
    ZeroVector(String),
    #[error("dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },
    #[error("duplicate entry `{0}`")]
    DuplicateName(String),
    #[error("no prompted embedding for scene `{scene}` (looked up `{prompted}`)")]
    MissingSceneEmbedding { scene: String, prompted: String },
    #[error("image {image_id} has {available} scene entries, {required} required")]
    InsufficientScenes {
        image_id: u64,
        available: usize,
        required: usize,
    },
    #[error("no scene context for image {0}")]
    MissingSceneContext(u64),
    #[error("category {0} has no entry")]
    MissingCategory(u64),
    #[error("category {0} is listed as both base and novel")]
    OverlappingSplit(u64),
    #[error("could not sample a region after {attempts} attempts: {reason}")]
    InfeasibleSample { attempts: usize, reason: String },
    #[error("infeasible synthetic world: {0}")]
    InfeasibleSpec(String),
    #[error("parse error at {position}: {reason}")]
    Parse { position: String, reason: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn parse(position: impl Into<String>, reason: impl ToString) -> Self {
        Error::Parse {
            position: position.into(),
            reason: reason.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code: 1 validation, 2 parse, 3 infeasible or degenerate.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::Parse { .. } => 2,
            Error::DegenerateInput
            | Error::DegenerateBox
            | Error::ZeroVector(_)
            | Error::InfeasibleSample { .. }
            | Error::InfeasibleSpec(_) => 3,
            _ => 1,
        }
    }
}
