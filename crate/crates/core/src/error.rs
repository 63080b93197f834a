use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: no records")]
    NoRecords(PathBuf),

    #[error("duplicate dataset id `{0}`")]
    DuplicateDataset(String),

    #[error("empty intent `{0}`")]
    EmptyIntent(String),

    #[error("empty corpus `{0}`")]
    EmptyCorpus(String),

    #[error("n-gram order mismatch: {0} vs {1}")]
    OrderMismatch(usize, usize),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error("zero-norm vector")]
    ZeroNorm,

    #[error("missing embedding for query `{0}`")]
    MissingEmbedding(String),

    #[error("invalid matrix file: {0}")]
    Matrix(String),

    #[error("invalid embedding index: {0}")]
    Index(String),

    #[error("need at least 2 intents to train, found {0}")]
    TooFewIntents(usize),

    #[error("candidate `{0}` belongs to the training dataset")]
    SameDataset(String),

    #[error("empty classification distribution")]
    EmptyDistribution,

    #[error("invalid collision graph: {0}")]
    Graph(String),

    #[error("empty score list")]
    EmptyScores,

    #[error("non-finite score {0}")]
    NonFinite(f64),

    #[error("requested {requested} non-colliding pairs but only {available} are available")]
    SampleTooLarge { requested: usize, available: usize },

    #[error("invalid merge plan: {0}")]
    Plan(String),

    #[error("intent `{0}` has fewer than 2 queries and cannot be split")]
    Unsplittable(String),

    #[error("no score for query `{0}`")]
    MissingScore(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
