use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: `{field}` {constraint}")]
    Invalid { field: String, constraint: String },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e}, scale {scale:e})")]
    NotPsd { min_eig: f64, scale: f64 },

    #[error("communications constraint of user {user} is infeasible at the anchor")]
    CommInfeasible { user: usize },

    #[error("no feasible starting point reaches the communications SINR threshold xi = {xi_db:.3} dB")]
    InitInfeasible { xi_db: f64 },

    #[error("convex solver failed: {0}")]
    Solver(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, constraint: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            constraint: constraint.into(),
        }
    }

    /// True for errors caused by user-supplied configuration.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Parse(_) | Error::Invalid { .. } | Error::DegenerateGeometry(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
