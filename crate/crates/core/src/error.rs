use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: expected 3 tab-separated fields, found {found}")]
    MalformedLine { line: usize, found: usize },

    #[error("no triples in input")]
    EmptyInput,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown entity `{0}`")]
    UnknownEntity(String),

    #[error("unknown relation `{0}`")]
    UnknownRelation(String),

    #[error("cause entity has no outgoing triples")]
    EmptyCauseProperties,

    #[error("query has no target relations")]
    NoTargetRelations,

    #[error("no cases for relation `{0}`")]
    NoCases(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(
        "split constraints unsatisfiable: selected {selected} of {requested} held-out entities"
    )]
    SplitUnsatisfiable { selected: usize, requested: usize },

    #[error("split has no test links to evaluate")]
    EmptySplit,

    #[error("bad query spec: {0}")]
    BadQuery(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
