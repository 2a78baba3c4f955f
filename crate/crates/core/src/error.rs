use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("non-finite value produced at layer {layer}")]
    NonFiniteOutput { layer: usize },

    #[error("non-finite gradient; update skipped")]
    NonFiniteGradient,

    #[error("non-finite loss in {0}")]
    NonFiniteLoss(&'static str),

    #[error("gradient tape is stale or was not produced by these parameters")]
    StaleTape,

    #[error("insufficient data: need at least {needed}, have {have}")]
    InsufficientData { needed: usize, have: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("level generator exhausted {attempts} attempts for seed {seed}")]
    GeneratorExhausted { seed: u64, attempts: usize },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("update {update} failed: {source}")]
    Update {
        update: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(
        context: &'static str,
        expected: impl std::fmt::Display,
        actual: impl std::fmt::Display,
    ) -> Self {
        Error::Shape {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
