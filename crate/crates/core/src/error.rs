//! Engine-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} is not divisible by p^{pow}")]
    NotDivisible { value: u64, pow: u32 },
    #[error("precision exhausted: cannot divide by p^{pow} at precision {precision}")]
    PrecisionExhausted { precision: u32, pow: u32 },
    #[error("factorial entry {entry} >= p = {p} is not invertible mod p")]
    FactorialNotInvertible { entry: u32, p: u64 },
    #[error("syntax error at byte {pos}: {msg}")]
    SyntaxError { pos: usize, msg: String },
    #[error("negative exponent on uninverted variable `{0}`")]
    NegativeExponentOnUninverted(String),
    #[error("substitution image of {0} is not a unit")]
    NonInvertibleImage(String),
    #[error("operation undefined on the zero element")]
    ZeroElement,
    #[error("element is not a unit")]
    NotAUnit,
    #[error("ring mismatch: {0}")]
    RingMismatch(String),
    #[error("incompatible rings: {0}")]
    IncompatibleRings(String),
    #[error("denominator multiplicity exceeds cap {0}")]
    DenominatorCapExceeded(u32),
    #[error("ambient mismatch: {0}")]
    AmbientMismatch(String),
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid Frobenius lifting: {0}")]
    InvalidLifting(String),
    #[error("weight overflow: {0}")]
    WeightOverflow(String),
    #[error("precision too low: {0}")]
    PrecisionTooLow(String),
    #[error("submodule is not theta-stable: {0}")]
    ThetaUnstable(String),
    #[error("strong divisibility failure: {0}")]
    StrongDivisibilityFailure(String),
    #[error("gluing mismatch: {0}")]
    GluingMismatch(String),
    #[error("horizontality violation: {0}")]
    HorizontalityViolation(String),
    #[error("p-curvature is nonzero: {0}")]
    NotPCurvatureZero(String),
    #[error("degree bound exceeded: {0}")]
    DegreeBoundExceeded(String),
    #[error("submodule is not horizontal: {0}")]
    NotHorizontal(String),
    #[error("descent failure: {0}")]
    DescentFailure(String),
    #[error("nilpotency too deep: {0}")]
    NilpotencyTooDeep(String),
    #[error("missing lifting: {0}")]
    MissingLifting(String),
}

pub type Result<T> = std::result::Result<T, Error>;
