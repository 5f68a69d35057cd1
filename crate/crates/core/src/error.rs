use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed case file at line {line}: {message}")]
    MalformedCase { line: usize, message: String },

    #[error("case has no slack (type 3) bus")]
    MissingSlack,

    #[error("case has more than one slack bus ({0:?})")]
    MultipleSlack(Vec<usize>),

    #[error("duplicate bus id {0}")]
    DuplicateBusId(usize),

    #[error("base MVA must be positive, got {0}")]
    NonPositiveBase(f64),

    #[error("invalid case data: {0}")]
    InvalidCase(String),

    #[error("branch {index} ({from}-{to}) has zero series impedance")]
    ZeroImpedanceBranch { index: usize, from: usize, to: usize },

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("Newton iteration failed to converge after {iterations} iterations (mismatch {mismatch:e}){}",
        .breakpoint.map(|b| format!(" at breakpoint {b}")).unwrap_or_default())]
    NonConvergence {
        iterations: usize,
        mismatch: f64,
        breakpoint: Option<usize>,
    },

    #[error("singular matrix: pivot {pivot:e} in column {column}")]
    SingularJacobian { column: usize, pivot: f64 },

    #[error("derivative of order {0} requested before all lower orders were computed")]
    MissingLowerOrder(usize),

    #[error("empty input")]
    EmptyInput,

    #[error("invalid derivative order {0}")]
    InvalidOrder(usize),

    #[error("first derivative is zero")]
    ZeroFirstDerivative,

    #[error("time {time} h lies outside the interval [{start}, {end}]")]
    TimeOutOfInterval { time: f64, start: f64, end: f64 },

    #[error("breakpoint times must be strictly increasing (index {0})")]
    NonMonotonicTimes(usize),

    #[error("injection layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("integer overflow in {0}")]
    Overflow(&'static str),

    #[error("double factorial is only defined here for odd arguments, got {0}")]
    EvenArgument(i64),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("schedule error: {0}")]
    Schedule(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of the numerical machinery rather than of the input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence { .. }
                | Error::SingularJacobian { .. }
                | Error::InfeasibleScenario(_)
                | Error::ZeroFirstDerivative
        )
    }
}
