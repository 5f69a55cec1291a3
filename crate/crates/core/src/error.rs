use thiserror::Error;

/// Errors raised across the crate.
///
/// The variants are grouped into classes (see [`ErrorClass`]) that the
/// command line maps onto process exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("mass matrix is singular or not positive definite")]
    SingularMass,

    #[error("matrix is not Hurwitz (spectral abscissa {abscissa:.6e}); no stationary solution")]
    NotHurwitz { abscissa: f64 },

    #[error("K + sF + s²M is singular at s = {re}{im:+}i")]
    SingularFrequency { re: f64, im: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("gradient mismatch for {param}: analytic {analytic:.6e} vs finite-difference {numeric:.6e} (rel. err {rel_err:.3e})")]
    GradientMismatch {
        param: &'static str,
        analytic: f64,
        numeric: f64,
        rel_err: f64,
    },

    #[error("{0}")]
    NotConverged(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Instability,
    Numerical,
    NonConvergence,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Dimension(_)
            | Error::Validation(_)
            | Error::InvalidArgument(_)
            | Error::SingularMass
            | Error::Parse { .. } => ErrorClass::Validation,
            Error::NotHurwitz { .. } => ErrorClass::Instability,
            Error::SingularFrequency { .. }
            | Error::Numerical(_)
            | Error::GradientMismatch { .. } => ErrorClass::Numerical,
            Error::NotConverged(_) => ErrorClass::NonConvergence,
            Error::Io(_) => ErrorClass::Io,
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self.class() {
            ErrorClass::Validation => 2,
            ErrorClass::Instability => 3,
            ErrorClass::Numerical => 4,
            ErrorClass::NonConvergence => 5,
            ErrorClass::Io => 1,
        }
    }
}
