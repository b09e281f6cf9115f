use thiserror::Error;

use crate::simple_game::Coalition;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("transition matrix must be square with at least 2 states (got {rows}x{cols})")]
    BadKernelShape { rows: usize, cols: usize },
    #[error("row {row} sums to {sum}, expected 1")]
    NonStochasticRow { row: usize, sum: f64 },
    #[error("entry ({row}, {col}) = {value} is negative or not finite")]
    NegativeEntry { row: usize, col: usize, value: f64 },
    #[error("invalid disorder prior: {0}")]
    InvalidPrior(String),
    #[error("invalid sensor model: {0}")]
    InvalidSensor(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("observed transition {from} -> {to} has zero likelihood under both regimes")]
    ZeroLikelihood { from: usize, to: usize },

    #[error("value iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("exact enumeration needs {nodes} nodes, limit is {limit}")]
    TreeTooLarge { nodes: usize, limit: usize },
    #[error("joint state space has {states} states, budget is {limit}")]
    BudgetExceeded { states: usize, limit: usize },

    #[error("winning coalitions are not monotone: {winning} wins but {superset} loses")]
    NotMonotone { winning: Coalition, superset: Coalition },
    #[error("the empty coalition must lose")]
    EmptyWins,
    #[error("the full coalition must win")]
    FullLoses,
    #[error("invalid simple game: {0}")]
    InvalidGame(String),

    #[error("best-response cycle at stage {stage} has no comparable profile")]
    CycleUnresolved { stage: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Error {
    /// Errors caused by a state space or enumeration that is too large.
    pub fn is_budget(&self) -> bool {
        matches!(self, Error::TreeTooLarge { .. } | Error::BudgetExceeded { .. })
    }
}
