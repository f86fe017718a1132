use std::io;

/// Errors raised across the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("step {t} outside 1..={steps}")]
    StepOutOfRange { t: usize, steps: usize },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("rank-deficient system: {0}")]
    RankDeficient(String),
    #[error("unknown word id {0}")]
    UnknownWord(u32),
    #[error("modality mismatch: expected {expected}, found {found}")]
    Modality { expected: String, found: String },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite<'a, I>(values: I, what: &str) -> Result<()>
where
    I: IntoIterator<Item = &'a f64>,
{
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}
