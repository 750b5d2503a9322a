use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} index {index} out of range (size {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    /// The observation cannot be received from this belief under this action.
    #[error("observation {observation} has zero probability under action {action}")]
    ZeroProbabilityObservation { action: usize, observation: usize },

    #[error("{what} sums to {sum} (tolerance 1e-6)")]
    Normalization { what: String, sum: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("joint space has {entries} entries, cap is {cap}")]
    Overflow { entries: u128, cap: u128 },

    #[error("best-response state space has {states} states, cap is {cap}")]
    CapacityExceeded { states: u128, cap: u128 },

    #[error("agent {agent} node {node} has a stochastic action rule; lagged formalization needs deterministic actions")]
    StochasticActionRuleUnsupported { agent: usize, node: usize },

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("evaluation did not converge after {iterations} iterations (residual {residual})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("line {line}: syntax error, expected {expected}")]
    Syntax { line: usize, expected: String },

    #[error("line {line}: dimension mismatch: {message}")]
    DimensionMismatch { line: usize, message: String },

    #[error("line {line}: unknown identifier `{name}`")]
    UnknownIdentifier { line: usize, name: String },

    #[error("invalid controller: {0}")]
    InvalidFsc(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
