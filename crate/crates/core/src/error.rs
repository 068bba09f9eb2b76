use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Operand shapes do not fit together.
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    InvalidConfig(String),
    EmptyInput(&'static str),
    /// An index or label outside its allowed range.
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    /// Alignment left no emg/angle pair within the allowed gap.
    EmptyOverlap {
        subject: u32,
        session: u32,
    },
    /// Not enough rows (or seconds) for the requested operation.
    TooShort {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    ZeroRange {
        angle: usize,
    },
    NonFinite {
        context: String,
    },
    /// A backward pass was handed a trace that does not belong to the params.
    TraceMismatch(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {}x{} vs {}x{}", lhs.0, lhs.1, rhs.0, rhs.1)
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::EmptyInput(what) => write!(f, "empty input: {what}"),
            Error::OutOfRange { what, value, lo, hi } => {
                write!(f, "{what} = {value} outside [{lo}, {hi}]")
            }
            Error::EmptyOverlap { subject, session } => write!(
                f,
                "subject {subject} session {session}: no emg/angle pairs within the alignment gap"
            ),
            Error::TooShort { what, needed, got } => {
                write!(f, "{what} too short: need {needed}, got {got}")
            }
            Error::ZeroRange { angle } => write!(f, "angle {angle} has zero range"),
            Error::NonFinite { context } => write!(f, "non-finite value: {context}"),
            Error::TraceMismatch(what) => write!(f, "trace does not match parameters: {what}"),
        }
    }
}

impl core::error::Error for Error {}
