//! Error type shared across the crate.

use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor dims disagree with what an operation requires.
    ShapeMismatch(String),
    /// Mixed dtypes where a single dtype is required.
    DtypeMismatch(String),
    /// Operation not defined for this dtype (e.g. convolution on u8).
    UnsupportedDtype(String),
    /// Elementwise division with a zero in the divisor.
    DivisionByZero,
    /// Integer overflow in u8 elementwise arithmetic.
    Overflow,
    /// A produced value was NaN or infinite.
    NonFinite(String),
    /// Kernel/stride/dilation/padding combination is invalid for the input.
    InvalidGeometry(String),
    /// Caller passed an argument outside the operation's contract.
    InvalidArgument(String),
    /// Tensor file decoding failures.
    BadMagic,
    UnsupportedVersion(u8),
    BadDtypeCode(u8),
    TruncatedPayload { expected: usize, got: usize },
    LengthMismatch { expected: usize, got: usize },
    /// Layer geometries do not compose into a chain.
    NonComposableChain(String),
    /// Segmentation label >= class count.
    LabelOutOfRange { label: usize, classes: usize },
    /// Every pixel was ignored; no metric is defined.
    NoEvaluatedPixels,
    /// Training aborted on a non-finite loss.
    Diverged { epoch: usize, batch: usize },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::DtypeMismatch(msg) => write!(f, "dtype mismatch: {msg}"),
            Error::UnsupportedDtype(msg) => write!(f, "unsupported dtype: {msg}"),
            Error::DivisionByZero => write!(f, "division by zero"),
            Error::Overflow => write!(f, "integer overflow"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::InvalidGeometry(msg) => write!(f, "invalid geometry: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::BadMagic => write!(f, "bad magic (expected \"PTEN\")"),
            Error::UnsupportedVersion(v) => write!(f, "unsupported tensor file version {v}"),
            Error::BadDtypeCode(c) => write!(f, "unknown dtype code {c}"),
            Error::TruncatedPayload { expected, got } => {
                write!(f, "truncated payload: expected {expected} bytes, got {got}")
            }
            Error::LengthMismatch { expected, got } => {
                write!(f, "dim/payload length mismatch: expected {expected}, got {got}")
            }
            Error::NonComposableChain(msg) => write!(f, "non-composable chain: {msg}"),
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::NoEvaluatedPixels => write!(f, "no evaluated pixels"),
            Error::Diverged { epoch, batch } => {
                write!(f, "training diverged (non-finite loss) at epoch {epoch}, batch {batch}")
            }
        }
    }
}

impl core::error::Error for Error {}
