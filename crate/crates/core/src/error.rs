use thiserror::Error;

use crate::game::GameReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid game: {}", .0.first_failure().unwrap_or_else(|| "unknown violation".to_string()))]
    InvalidGame(Box<GameReport>),

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid distribution in {what}: {detail}")]
    InvalidDistribution { what: &'static str, detail: String },

    #[error("player index {player} out of range for a {num_players}-player game")]
    PlayerOutOfRange { player: usize, num_players: usize },

    #[error("{what} needs {required} entries which exceeds the configured cap of {cap}")]
    CapExceeded {
        what: &'static str,
        required: u128,
        cap: u128,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("operation requires {expected} constraint mode")]
    Mode { expected: &'static str },

    #[error("malformed linear program: {0}")]
    MalformedLp(String),

    #[error("simplex did not terminate within {0} pivots")]
    IterationLimit(usize),

    #[error("no feasible starting point: {0}")]
    NoFeasibleStart(String),

    #[error("policy is not feasible: minimum slack {min_slack:e}")]
    InfeasiblePolicy { min_slack: f64 },
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, found: usize) -> Self {
        Error::Dimension {
            what,
            expected,
            found,
        }
    }
}
