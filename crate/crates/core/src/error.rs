use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A constructor or entry point received inputs outside its domain.
    #[error("{field}: {message}")]
    Validation { field: &'static str, message: String },

    #[error("matrix is not PSD: smallest eigenvalue {min_eig:e} vs largest {max_eig:e}")]
    NotPsd { min_eig: f64, max_eig: f64 },

    /// Step-doubling disagreement of the fluid integrator.
    #[error("ODE accuracy failure at t={time}: step-doubling l1 gap {gap:e} exceeds {tol:e}")]
    Accuracy { time: f64, gap: f64, tol: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(field: &'static str, message: impl Into<String>) -> Self {
        Error::Validation {
            field,
            message: message.into(),
        }
    }

    /// Process exit code: 1 validation, 2 numerical failure, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation { .. } => 1,
            Error::NotPsd { .. } | Error::Accuracy { .. } => 2,
            Error::Io(_) | Error::Json(_) => 3,
        }
    }
}
