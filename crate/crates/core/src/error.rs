use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("duplicate variable `{0}`")]
    DuplicateVariable(String),

    #[error("variable `{0}` must have alphabet size >= 1")]
    EmptyAlphabet(String),

    #[error("variable set must be nonempty")]
    EmptyVariableSet,

    #[error("variable `{0}` appears in more than one set of the query")]
    OverlappingSets(String),

    #[error("table needs {required} cells, the ceiling is {ceiling}")]
    TooLarge { required: u128, ceiling: u128 },

    #[error("probability table has {got} entries, expected {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("invalid probability mass: {0}")]
    InvalidPmf(String),

    #[error("channel transition matrix is not stochastic: {0}")]
    NotStochastic(String),

    #[error("invalid distortion measure: {0}")]
    InvalidDistortion(String),

    #[error("symbol {symbol} out of range for alphabet of size {size}")]
    SymbolOutOfRange { symbol: usize, size: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} did not converge within {iterations} iterations (gap {gap:e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        gap: f64,
    },

    #[error("distortion {requested} is infeasible; the minimum achievable is {minimum}")]
    InfeasibleDistortion { requested: f64, minimum: f64 },

    #[error("distortion pair ({d1}, {d2}) is infeasible; minimum achievable is ({min1}, {min2})")]
    InfeasibleDistortionPair {
        d1: f64,
        d2: f64,
        min1: f64,
        min2: f64,
    },

    #[error("invalid code: {0}")]
    InvalidCode(String),

    #[error("stagger transform needs c1[1] = 1 and c2[N] = 1; {0}. Apply boundary_pad (after repetition_lift to amortize the padding) first")]
    StaggerPrecondition(String),

    #[error("code is not staggered: {0}")]
    NotStaggered(String),

    #[error("alphabet mismatch: {0}")]
    AlphabetMismatch(String),

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error("separation plan error: {0}")]
    Plan(String),
}

pub type Result<T> = std::result::Result<T, Error>;
