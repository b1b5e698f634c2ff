use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two grids (or a grid and a mask) that must agree in shape do not.
    ShapeMismatch { expected: (usize, usize, usize), found: (usize, usize, usize) },
    /// A precondition on values or parameters was violated.
    Contract(String),
    /// A parameter is outside its admissible range.
    InvalidParameter { name: &'static str, reason: String },
    /// A region used for statistics holds fewer than two pixels.
    RegionTooSmall { region: &'static str, pixels: usize },
    /// The input to a threshold has no spread.
    FlatInput,
    /// The first-order solver produced a non-finite loss.
    Divergence { iteration: usize },
    /// A synthetic specification cannot be realized without clamping.
    SpecOutOfRange { component: &'static str, value: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { expected, found } => write!(
                f,
                "shape mismatch: expected {}x{}x{}, found {}x{}x{}",
                expected.0, expected.1, expected.2, found.0, found.1, found.2
            ),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::InvalidParameter { name, reason } => write!(f, "invalid parameter `{name}`: {reason}"),
            Error::RegionTooSmall { region, pixels } => {
                write!(f, "{region} region has {pixels} pixels, need at least 2")
            }
            Error::FlatInput => f.write_str("input map is flat, no threshold separates it"),
            Error::Divergence { iteration } => write!(f, "solver diverged at iteration {iteration}"),
            Error::SpecOutOfRange { component, value } => {
                write!(f, "synthetic {component} reaches {value}, outside [0, 1]")
            }
        }
    }
}

impl core::error::Error for Error {}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
