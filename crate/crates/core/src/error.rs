use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the modeling pipeline.
///
/// Variants split into *input* problems (bad files, bad arguments, invalid
/// configuration) and *computation* problems (degenerate numerics). The CLI
/// maps the two groups onto different exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("invalid `{path}`: {message}")]
    Validation { path: String, message: String },

    #[error("domain error in `{feature}`: {message}")]
    Domain { feature: String, message: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("game has {players} players; exact computation is limited to {limit}")]
    TooManyPlayers { players: usize, limit: usize },

    #[error("shares are undefined because the Shapley values sum to zero")]
    ZeroTotal,

    #[error("matrix `{0}` is not positive definite")]
    NotPositiveDefinite(String),

    #[error("causal graph contains a cycle through `{0}`")]
    Cycle(String),

    #[error("underdetermined exogenous noise: {}", .0.join(", "))]
    Underdetermined(Vec<String>),

    #[error("replicate {index} failed: {source}")]
    Replicate {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("graph `{label}`: {source}")]
    Graph {
        label: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    Computation(String),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by the caller's input rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Validation { .. }
            | Error::Dimension(_)
            | Error::TooManyPlayers { .. }
            | Error::NotPositiveDefinite(_)
            | Error::Cycle(_)
            | Error::Underdetermined(_) => true,
            Error::Replicate { source, .. } | Error::Graph { source, .. } => source.is_input_error(),
            Error::Domain { .. } | Error::ZeroTotal | Error::Computation(_) => false,
        }
    }
}
