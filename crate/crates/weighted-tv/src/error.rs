use thiserror::Error;

/// Errors surfaced by the library API.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch for {what}: expected {expected:?}, got {got:?}")]
    GridMismatch {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("singular linear system in {what}: {detail}")]
    SingularSystem { what: &'static str, detail: String },

    #[error("{what} did not converge after {iters} iterations (residual {residual:.3e})")]
    NonConvergence {
        what: &'static str,
        iters: usize,
        residual: f64,
    },

    #[error("active-set projection did not settle within {sweeps} sweeps")]
    ActiveSetNonConvergence { sweeps: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image error: {0}")]
    Image(#[from] image::ImageError),

    #[error("bad file format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
