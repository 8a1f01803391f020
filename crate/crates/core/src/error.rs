use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid cavity dimension {0}: need at least 2 Fock levels")]
    InvalidDimension(usize),

    #[error("invalid qudit level {0}: levels are 0..=4")]
    InvalidLevel(usize),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch { context: &'static str, expected: usize, found: usize },

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("scheduling error: {0}")]
    Scheduling(String),

    #[error("singular detuning: {0}")]
    Singularity(String),

    #[error("truncation inadequate: population {population:.3e} in the top Fock level (d = {cavity_dim})")]
    Truncation { population: f64, cavity_dim: usize },

    #[error("numerical integrity violated: {0}")]
    Integrity(String),

    #[error("step size underflow at t = {t:.6e} µs (h = {h:.3e}): {context}")]
    StepUnderflow { t: f64, h: f64, context: String },

    #[error("{step}: {source}")]
    InStep {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn in_step(self, step: &'static str) -> Self {
        Error::InStep { step, source: Box::new(self) }
    }

    /// True for failures raised by the time integrator or integrity checks.
    pub fn is_runtime(&self) -> bool {
        match self {
            Error::StepUnderflow { .. } | Error::Integrity(_) => true,
            Error::InStep { source, .. } => source.is_runtime(),
            _ => false,
        }
    }
}
