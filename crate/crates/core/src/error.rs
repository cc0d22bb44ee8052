use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Broad class of a failure; the CLI maps these onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A parameter violates its invariant.
    Config,
    /// An index, time or window falls outside the data it addresses.
    Bounds,
    /// Input collections disagree in length or dimension.
    Shape,
    /// A quantity needed for normalisation is zero (SNR, gain, weights, ratio).
    Degenerate,
    /// A linear system could not be solved.
    Singular,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Error {
    kind: ErrorKind,
    msg: String,
}

impl Error {
    pub fn new(kind: ErrorKind, msg: impl Into<String>) -> Self {
        Self {
            kind,
            msg: msg.into(),
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Self::new(ErrorKind::Config, msg)
    }

    pub(crate) fn bounds(msg: impl Into<String>) -> Self {
        Self::new(ErrorKind::Bounds, msg)
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Self::new(ErrorKind::Shape, msg)
    }

    pub(crate) fn degenerate(msg: impl Into<String>) -> Self {
        Self::new(ErrorKind::Degenerate, msg)
    }

    pub fn kind(&self) -> ErrorKind {
        self.kind
    }

    pub fn message(&self) -> &str {
        &self.msg
    }

    /// Prefixes the message with some context, keeping the kind.
    pub fn context(mut self, ctx: impl fmt::Display) -> Self {
        self.msg = alloc::format!("{ctx}: {}", self.msg);
        self
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorKind::Config => "configuration error",
            ErrorKind::Bounds => "out of bounds",
            ErrorKind::Shape => "shape mismatch",
            ErrorKind::Degenerate => "numerical degeneracy",
            ErrorKind::Singular => "singular system",
        })
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.msg)
    }
}

impl core::error::Error for Error {}
