use thiserror::Error;

/// Errors surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("class index {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("empty sample")]
    EmptySample,

    #[error("sample too small: need at least {needed}, got {got}")]
    SampleTooSmall { needed: usize, got: usize },

    #[error("simplex grid too fine: {classes} classes at step {step} is intractable")]
    GridTooFine { classes: usize, step: f64 },

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("non-finite prediction for example {example}")]
    NonFiniteForward { example: usize },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    #[error("member training failed at lambda {lambda}: {source}")]
    SweepMemberFailed {
        lambda: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot parse cell at row {row}, column `{column}`: {value:?}")]
    UnparsableCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("label column `{0}` not found in header")]
    MissingLabelColumn(String),

    #[error("dataset has a single class; need at least two")]
    SingleClass,

    #[error("categorical value {value:?} in numeric column `{column}`")]
    CategoricalRejected { column: String, value: String },

    #[error("plan error: {0}")]
    Plan(String),

    #[error("all {trials} trials failed for method `{method}`; first error: {detail}")]
    MethodFailed {
        method: String,
        trials: usize,
        detail: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
