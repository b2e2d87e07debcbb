use std::path::PathBuf;

use thiserror::Error;

use crate::model::SubgroupLabel;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid subgroup label: {0}")]
    InvalidLabel(String),

    #[error("population is empty")]
    EmptyPopulation,

    #[error("candidate `{id}` has no {which} label")]
    MissingLabel { id: String, which: &'static str },

    #[error("label `{0}` is not covered by the confusion matrix")]
    LabelNotInMatrix(SubgroupLabel),

    #[error("duplicate candidate id `{id}`{}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    DuplicateId { id: String, line: Option<u64> },

    #[error("candidate `{id}` has a non-finite score")]
    InvalidScore { id: String },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("original ranking is not sorted by score at position {position}")]
    UnsortedRanking { position: usize },

    #[error("subgroup `{0}` has zero base proportion")]
    ZeroBaseProportion(SubgroupLabel),

    #[error("invalid rank {0}; ranks start at 1")]
    InvalidRank(usize),

    #[error("ratio is undefined: the largest group statistic is zero")]
    DegenerateRatio,

    #[error("candidate `{0}` does not appear in the original ranking")]
    UnknownCandidate(String),

    #[error("group `{label}` needs {needed} candidates but only {available} are available")]
    InsufficientCandidates {
        label: SubgroupLabel,
        needed: usize,
        available: usize,
    },

    #[error("unknown confusion matrix `{0}`")]
    UnknownMatrix(String),

    #[error("invalid confusion matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
