use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit reports. Loader errors carry the offending
/// name or line through [`Error::AtLine`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("duplicate name {name:?} in {list} list")]
    DuplicateName { list: &'static str, name: String },

    #[error("{list} list is empty")]
    EmptyVocab { list: &'static str },

    #[error("duplicate image id {0:?}")]
    DuplicateImageId(String),

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("{what} count {got} does not match {expected}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("malformed box {0:?}")]
    MalformedBox(Vec<f64>),

    #[error("relation links object {0} to itself")]
    SelfRelation(usize),

    #[error("duplicate relation ({0}, {1}, {2})")]
    DuplicateRelation(usize, usize, usize),

    #[error("pair ({0}, {1}) carries more than one predicate")]
    MultiLabelPair(usize, usize),

    #[error("duplicate candidate pair ({0}, {1})")]
    DuplicatePair(usize, usize),

    #[error("score vector {pair} has length {got}, expected {expected}")]
    ScoreLengthMismatch {
        pair: usize,
        expected: usize,
        got: usize,
    },

    #[error("{what} value {value} outside [0, 1]")]
    ProbabilityOutOfRange { what: &'static str, value: f64 },

    #[error("non-finite {0} score")]
    NonFinite(&'static str),

    #[error("score vector {pair} sums to {sum}, not 1")]
    NotNormalized { pair: usize, sum: f64 },

    #[error("missing or invalid score_kind header")]
    MissingHeader,

    #[error("vocabularies differ: {0}")]
    VocabMismatch(String),

    #[error("mixed score kinds in one prediction corpus")]
    MixedScoreKind,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("category weights need a non-empty support set")]
    EmptySupport,

    #[error("no compositional diversity count for predicate {0}")]
    MissingDiversity(usize),

    #[error("ground truth required for image {0:?}")]
    MissingGroundTruth(String),

    #[error("attack size {n} out of range 1..={max}")]
    AttackSizeOutOfRange { n: usize, max: usize },

    #[error("infeasible generator settings: {0}")]
    Infeasible(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_line(self, line: usize) -> Self {
        Error::AtLine {
            line,
            source: Box::new(self),
        }
    }

    /// Strips line wrappers and returns the underlying error.
    pub fn kind(&self) -> &Error {
        match self {
            Error::AtLine { source, .. } => source.kind(),
            other => other,
        }
    }

    /// Stable identifier for machine-readable reporting.
    pub fn code(&self) -> &'static str {
        match self.kind() {
            Error::Io { .. } => "Io",
            Error::Parse(_) => "Parse",
            Error::AtLine { .. } => unreachable!(),
            Error::DuplicateName { .. } => "DuplicateName",
            Error::EmptyVocab { .. } => "EmptyVocab",
            Error::DuplicateImageId(_) => "DuplicateImageId",
            Error::IndexOutOfRange { .. } => "IndexOutOfRange",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::MalformedBox(_) => "MalformedBox",
            Error::SelfRelation(_) => "SelfRelation",
            Error::DuplicateRelation(..) => "DuplicateRelation",
            Error::MultiLabelPair(..) => "MultiLabelPair",
            Error::DuplicatePair(..) => "DuplicatePair",
            Error::ScoreLengthMismatch { .. } => "ScoreLengthMismatch",
            Error::ProbabilityOutOfRange { .. } => "ProbabilityOutOfRange",
            Error::NonFinite(_) => "NonFinite",
            Error::NotNormalized { .. } => "NotNormalized",
            Error::MissingHeader => "MissingHeader",
            Error::VocabMismatch(_) => "VocabMismatch",
            Error::MixedScoreKind => "MixedScoreKind",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::EmptySupport => "EmptySupport",
            Error::MissingDiversity(_) => "MissingDiversity",
            Error::MissingGroundTruth(_) => "MissingGroundTruth",
            Error::AttackSizeOutOfRange { .. } => "AttackSizeOutOfRange",
            Error::Infeasible(_) => "Infeasible",
        }
    }

    /// Line number of the offending input line, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            Error::AtLine { line, .. } => Some(*line),
            _ => None,
        }
    }
}
