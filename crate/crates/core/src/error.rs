use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("Newton iteration did not converge after {iterations} iterations (gradient max-norm {gradient_norm:e})")]
    NoConvergence {
        iterations: usize,
        beta: Vec<f64>,
        gradient_norm: f64,
    },

    #[error("monotone partial likelihood: |beta| exceeded {cap} (last iterate {beta:?})")]
    Separation { beta: Vec<f64>, cap: f64 },

    #[error("{failed} of {total} bootstrap replicates failed")]
    BootstrapInstability { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the caller's input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric(_)
                | Error::NoConvergence { .. }
                | Error::Separation { .. }
                | Error::BootstrapInstability { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
