//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration: empty vocabularies, inverted ranges, unknown
    /// lexeme classes, unsatisfiable parameter combinations.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A generation step could not proceed (e.g. no template for an event
    /// kind in the requested partition).
    #[error("generation failed: {0}")]
    Generation(String),

    /// Resampling hit its attempt bound without producing a valid pair.
    #[error("generation exhausted after {attempts} attempts: {reason}")]
    GenerationExhausted { attempts: u32, reason: String },

    /// The oracle found no successful event matching the question.
    #[error("question is unanswerable in this world")]
    Unanswerable,

    /// A modification targeted an event that already carries one.
    #[error("event {0} already carries a modification")]
    DoubleModification(u32),

    /// A modification does not apply at the requested site (e.g. SPM on a
    /// sentence without a numeral).
    #[error("modification not applicable: {0}")]
    NotApplicable(String),

    /// Internal bookkeeping disagrees with itself; indicates a bug in the
    /// realizer or modifier rather than bad input.
    #[error("consistency violation: {0}")]
    Consistency(String),

    /// A metric has no defined value for the given input (empty pair list,
    /// zero baseline-correct predictions, empty corpus).
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),

    /// A holdout split could not be formed.
    #[error("split error: {0}")]
    Split(String),

    /// A file could not be parsed; carries the location.
    #[error("{path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn parse(path: &str, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.to_string(),
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
