use std::fmt;
use std::path::PathBuf;

/// One broken invariant found by [`TabularMdp::validate`](crate::mdp::TabularMdp::validate).
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A transition row `(s, a, ·)` does not sum to one.
    RowSumError { state: usize, action: usize, sum: f64 },
    /// A transition or initial probability is negative or not finite.
    NegativeProbability { what: &'static str, index: usize, value: f64 },
    /// A terminal state that does not loop onto itself with zero reward.
    TerminalNotAbsorbing { state: usize },
    /// The initial distribution does not sum to one or puts mass on a terminal state.
    BadInitialDist { reason: String },
    /// Discount outside `[0, 1]`.
    BadGamma { gamma: f64 },
    /// Tensor length does not match the declared sizes.
    Shape { what: &'static str, expected: usize, actual: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSumError { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}")
            }
            Violation::NegativeProbability { what, index, value } => {
                write!(f, "{what}[{index}] = {value} is not a probability")
            }
            Violation::TerminalNotAbsorbing { state } => {
                write!(f, "terminal state {state} is not absorbing with zero reward")
            }
            Violation::BadInitialDist { reason } => write!(f, "bad initial distribution: {reason}"),
            Violation::BadGamma { gamma } => write!(f, "gamma = {gamma} is outside [0, 1]"),
            Violation::Shape { what, expected, actual } => {
                write!(f, "{what} has length {actual}, expected {expected}")
            }
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid MDP: {}", join(.0))]
    Validation(Vec<Violation>),

    #[error("cannot step from terminal state {0}")]
    TerminalStateStep(usize),

    #[error("likelihood ratio undefined at (s={state}, o={option}): 1 - beta' = {gap:e}")]
    DegenerateLikelihood { state: usize, option: usize, gap: f64 },

    #[error("linear system is singular: {0}")]
    SingularSystem(String),

    #[error("instance has {pairs} state-option pairs, the oracle cap is {cap}")]
    InstanceTooLarge { pairs: usize, cap: usize },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{message}")]
    Mismatch { message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(path: &str, line: usize, message: impl Into<String>) -> Self {
        Error::Parse { path: path.to_string(), line, message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

fn join(v: &[Violation]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
