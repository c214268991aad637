use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Non-special spans fail to tile the caption text.
    #[error("caption {caption_id}: spans do not tile the text: {reason}")]
    Coverage { caption_id: String, reason: String },

    #[error("no vocabulary entry matches {ch:?} at byte {offset}")]
    Vocab { ch: char, offset: usize },

    #[error("caption mismatch: {0}")]
    Mismatch(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid alignment map: {0}")]
    InvalidAlignment(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: field `{field}` out of range")]
    Range { line: usize, field: String },

    #[error("score out of range for {kind}: {value}")]
    ScoreRange { kind: String, value: f64 },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("threshold pool is empty")]
    EmptyPool,

    #[error("sigma must lie in (0, 1), got {0}")]
    SigmaRange(f64),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("attention row {row} has zero weighted mass")]
    DegenerateRow { row: usize },

    #[error("caption {0}: every scored token is flagged")]
    AllRemoved(String),

    #[error("caption {caption_id}: no slot of category {category}")]
    NoSlot {
        caption_id: String,
        category: String,
    },

    #[error("score/truth alignment error: {0}")]
    Alignment(String),

    #[error("caption {0}: judgment has no objects")]
    EmptyObjects(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for malformed input files (as opposed to inconsistent but
    /// individually valid inputs).
    pub fn is_schema(&self) -> bool {
        matches!(
            self,
            Error::Coverage { .. }
                | Error::Vocab { .. }
                | Error::Parse { .. }
                | Error::Range { .. }
                | Error::ScoreRange { .. }
                | Error::InvalidAlignment(_)
        )
    }

    /// True for errors raised when two inputs disagree with each other.
    pub fn is_consistency(&self) -> bool {
        matches!(
            self,
            Error::Mismatch(_)
                | Error::LengthMismatch { .. }
                | Error::Alignment(_)
                | Error::NoSlot { .. }
                | Error::Degenerate(_)
        )
    }
}
