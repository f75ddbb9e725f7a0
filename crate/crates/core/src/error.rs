use thiserror::Error;

/// Everything that can go wrong while building or analysing a transducer.
///
/// Probabilistic defects of a structurally sound model (columns that do not
/// sum to one, negative entries) are not errors; they are reported by
/// [`crate::model::Transducer::validate`].
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("structural error: {0}")]
    Structure(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("impossible history: it has probability {probability:e}")]
    ImpossibleHistory { probability: f64 },

    #[error("impossible observation under belief: normaliser is {normaliser:e}")]
    ImpossibleObservation { normaliser: f64 },

    #[error("enumeration of {words} words exceeds the budget of {budget} (use force to override)")]
    BudgetExceeded { words: u128, budget: u64 },

    #[error("partition is not a bisimulation: states {state} and {other} differ on {detail}")]
    NotBisimulation {
        state: String,
        other: String,
        detail: String,
    },

    #[error(
        "mixed-state presentation does not close: {visited} beliefs visited, depth {depth}, \
         nearest pair at L1 distance {nearest:e}"
    )]
    NonClosingMsp {
        visited: usize,
        depth: usize,
        nearest: f64,
    },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("singular marginal: {0}")]
    Singular(String),

    #[error("unreachable: {0}")]
    Unreachable(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
