use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("phantom primitive {index}: {reason}")]
    Primitive { index: usize, reason: String },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} values, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),

    #[error("CFL violation: dt = {dt} exceeds the stability bound {limit}")]
    Cfl { dt: f64, limit: f64 },

    #[error("source support: {0}")]
    Support(String),

    #[error("sound speed: {0}")]
    SoundSpeed(String),

    #[error("observation surface: {0}")]
    Surface(String),

    #[error("sinogram: {0}")]
    Sinogram(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear solve did not converge: {0}")]
    NoConvergence(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable short code, one per variant.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "E_GRID",
            Error::InvalidField(_) => "E_FIELD",
            Error::Primitive { .. } => "E_PRIMITIVE",
            Error::BadMagic { .. } => "E_MAGIC",
            Error::MalformedHeader(_) => "E_HEADER",
            Error::Truncated { .. } => "E_TRUNCATED",
            Error::NonFinite(_) => "E_NONFINITE",
            Error::Cfl { .. } => "E_CFL",
            Error::Support(_) => "E_SUPPORT",
            Error::SoundSpeed(_) => "E_SPEED",
            Error::Surface(_) => "E_SURFACE",
            Error::Sinogram(_) => "E_SINOGRAM",
            Error::Unsupported(_) => "E_UNSUPPORTED",
            Error::InvalidArgument(_) => "E_ARGUMENT",
            Error::NoConvergence(_) => "E_CONVERGENCE",
            Error::Io(_) => "E_IO",
        }
    }

    /// True for errors that originate in file handling rather than numerics
    /// or user input.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
