use ftu_core::{CoreError, Organ};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("organ mismatch: {0}")]
    OrganMismatch(String),

    #[error("no configuration for organ {0}")]
    MissingOrganConfig(Organ),

    #[error("checkpoint schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("predictor {context}: {message}")]
    PredictorFailed { context: String, message: String },

    #[error("predictor protocol: {0}")]
    Protocol(String),

    #[error("sample {id}: {source}")]
    Sample {
        id: String,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    /// Annotates an error with the sample id it occurred on.
    pub fn for_sample(id: impl Into<String>, source: PipelineError) -> Self {
        PipelineError::Sample { id: id.into(), source: Box::new(source) }
    }
}

pub type Result<T> = std::result::Result<T, PipelineError>;
