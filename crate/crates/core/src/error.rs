use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// The (u, v) basis handed to a projection is not orthonormal.
    NonOrthonormalBasis,
    /// A matrix that should be a proper rotation is not one.
    NotARotation,
    /// An equivalent-Jones vector with zero norm.
    ZeroNorm,
    /// Scattered-point field built without any points.
    EmptyPointSet,
    /// Two buffers that must agree in length do not.
    ShapeMismatch { expected: usize, got: usize },
    /// A NaN or infinity showed up while processing the given ray.
    NonFinite { ray: usize },
    /// Invalid configuration value.
    Config(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonOrthonormalBasis => write!(f, "projection basis is not orthonormal"),
            Error::NotARotation => write!(f, "matrix is not a proper rotation"),
            Error::ZeroNorm => write!(f, "equivalent Jones vector has zero norm"),
            Error::EmptyPointSet => write!(f, "scattered stress field has no points"),
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected} values, got {got}")
            }
            Error::NonFinite { ray } => write!(f, "non-finite value while processing ray {ray}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
