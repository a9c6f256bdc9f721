use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unexpected header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },

    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("submission log has no data rows")]
    EmptyLog,

    #[error("gradebook has no data rows")]
    EmptyGradebook,

    #[error("duplicate student `{0}` in gradebook")]
    DuplicateStudent(String),

    #[error("student `{id}`: {field} is outside [0, 100]")]
    ScoreOutOfRange { id: String, field: String },

    #[error("student `{0}`: unknown letter grade")]
    UnknownGrade(String),

    #[error("event references unknown student `{0}`")]
    OrphanEvent(String),

    #[error("question `{0}` appears under more than one assignment")]
    InconsistentAssignment(String),

    #[error("expected {expected} columns, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    #[error("leave-one-out needs at least 2 students, got {0}")]
    TooFewStudents(usize),

    #[error("training set is empty or has no columns")]
    EmptyTrainingSet,

    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("thresholds ({t_perf}, {t_subs}): {source}")]
    Sweep {
        t_perf: f64,
        t_subs: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("infeasible cohort configuration: {0}")]
    InfeasibleConfig(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
