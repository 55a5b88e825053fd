use thiserror::Error;

use crate::ltl::ParseError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    Model(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Formula(#[from] ParseError),
    #[error("atomic proposition `{0}` is not in the alphabet")]
    UnknownAtom(String),
    #[error("{count} atomic propositions exceed the limit of {limit}")]
    TooManyProps { count: usize, limit: usize },
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("satisfaction threshold {target} is infeasible: best reachable probability within the horizon is {h_max}")]
    Infeasible { target: f64, h_max: f64 },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}
