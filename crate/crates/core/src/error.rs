use num_complex::Complex64;

/// Failure modes shared across the crate.
///
/// `InvalidArgument` means the caller broke a precondition and no work was
/// started; file-producing entry points guarantee nothing was written in
/// that case. `AtEigenvalue` reports a (numerically) singular shifted
/// system, i.e. the shift hit the discrete spectrum.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("shifted system is singular: lambda = {lambda} is up to sign a discrete eigenvalue")]
    AtEigenvalue { lambda: Complex64 },

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("{what} did not converge within {iterations} iterations")]
    Convergence { what: String, iterations: usize },

    #[error("field evaluation failure: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
