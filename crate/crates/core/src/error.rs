use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("configuration error at position {position}: {message}")]
    Parse { position: usize, message: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("line {line}: {message}")]
    Row { line: usize, message: String },

    /// A respondent's fitted propensity fell below the weight floor.
    #[error("propensity {value:e} below floor {floor:e} at record {record}")]
    WeightExplosion { record: usize, value: f64, floor: f64 },

    /// Both outcome values have response probability numerically equal to one,
    /// so the nonrespondent outcome law is undefined.
    #[error("degenerate nonrespondent mixture at record {record}")]
    DegenerateMixture { record: usize },

    #[error("non-finite jacobian entry in column {column}")]
    NonFiniteJacobian { column: usize },

    #[error("singular matrix ({context}), condition estimate {condition:e}")]
    Singular { context: String, condition: f64 },

    #[error("evaluation failed at iterate {iterate:?}: {source}")]
    Evaluation {
        iterate: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("{estimator} did not converge: {reason}")]
    NotConverged { estimator: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable category used in CLI error documents.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Parse { .. } => "config",
            Error::Data(_) | Error::Row { .. } => "data",
            Error::WeightExplosion { .. } => "weight_explosion",
            Error::DegenerateMixture { .. } => "degenerate_mixture",
            Error::NonFiniteJacobian { .. } => "non_finite_jacobian",
            Error::Singular { .. } => "singular",
            Error::Evaluation { .. } => "evaluation",
            Error::NotConverged { .. } => "not_converged",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}
