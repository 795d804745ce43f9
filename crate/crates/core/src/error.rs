use thiserror::Error;

use crate::vocab::{Task, TokenId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("target vocabulary size {target} must exceed the reserved block of {reserved} ids")]
    VocabTooSmall { target: usize, reserved: usize },
    #[error("token id {id} at index {index} is out of range for vocabulary of size {size}")]
    IdOutOfRange { index: usize, id: TokenId, size: usize },
    #[error("vocabulary file line {line}: {message}")]
    VocabFormat { line: usize, message: String },
    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("unknown language code `{0}`")]
    UnknownLanguage(String),
    #[error("duplicate language code `{0}`")]
    DuplicateLanguage(String),
    #[error("token id {0} is not a registered control token")]
    UnregisteredControl(TokenId),

    #[error("{0} sequence must be non-empty")]
    EmptySequence(&'static str),
    #[error("input contains special token {id} at index {index}")]
    SpecialInInput { index: usize, id: TokenId },
    #[error("{name} = {value} is not a valid probability")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("{spans} masked spans exceed the {available} available sentinels")]
    TooManySpans { spans: usize, available: usize },
    #[error("invalid pair: {0}")]
    InvalidPair(String),
    #[error("all task mixing weights are zero")]
    AllZeroWeights,
    #[error("task `{0}` has positive weight but no examples")]
    EmptySource(Task),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sequence of length {len} exceeds max_positions {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("batch shape mismatch: {0}")]
    Shape(String),
    #[error("batch has no non-pad target tokens")]
    NoTargetTokens,
    #[error("loss is not finite")]
    NonFiniteLoss,
    #[error("gradient coordinate {index} is not finite")]
    NonFiniteGradient { index: usize },
    #[error("step {step}: {source}")]
    AtStep {
        step: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}:{line}: {message}")]
    CorpusParse { path: String, line: usize, message: String },
    #[error("cannot draw {n} records from a set of {len}")]
    SubsampleTooLarge { n: usize, len: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
    #[error(transparent)]
    TomlSer(#[from] toml::ser::Error),
}

impl Error {
    pub fn at_step(self, step: u64) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
