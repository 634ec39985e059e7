use thiserror::Error;

/// Errors raised by the expression language.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at column {column} in `{src}`: found {found}, expected one of {}", expected.join(", "))]
    Syntax {
        src: String,
        column: usize,
        found: String,
        expected: Vec<String>,
    },
    #[error("unknown identifier `{name}` at column {column} in `{src}`")]
    UnknownIdentifier { src: String, name: String, column: usize },
    #[error("variable `{name}` at column {column} in `{src}` is out of range (declared {limit})")]
    IndexOutOfRange {
        src: String,
        name: String,
        column: usize,
        limit: usize,
    },
    #[error("expression `{src}` exceeds the maximum nesting depth of {limit}")]
    TooDeep { src: String, limit: usize },
    #[error("empty expression")]
    Empty,
    #[error("non-finite value {value} from subexpression `{subexpr}`")]
    NonFinite { subexpr: String, value: f64 },
    #[error("expression expects {expected} values for {slot}, got {got}")]
    Arity {
        slot: &'static str,
        expected: usize,
        got: usize,
    },
}

/// Crate-wide error type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("size limit exceeded: {0}")]
    Size(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("unordered decomposition arguments: {0}")]
    Order(String),
    #[error("sign-indefinite Jacobian entry ({row}, {col}): positive at {positive_at:?}, negative at {negative_at:?}")]
    Indefinite {
        row: usize,
        col: String,
        positive_at: Vec<f64>,
        negative_at: Vec<f64>,
    },
    #[error("monotonicity violated: {what} = {value:.3e} at {at:?}")]
    NotMonotone { what: String, value: f64, at: Vec<f64> },
    #[error("decompositions reference different systems")]
    SystemMismatch,
    #[error("trajectory diverged after t = {last_time}")]
    Divergence { last_time: f64 },
    #[error("embedding order violated by {violation:.3e} at t = {time}; try a smaller step")]
    IntegratorStep { time: f64, violation: f64 },
    #[error("invalid reach specification: {0}")]
    Spec(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
