use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A state left the domain where the model is defined (e.g. a logarithm argument <= 0).
    #[error("state outside model domain: {0}")]
    Domain(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("candidate invariant `{name}` rejected: worst |grad I . S grad H| / |grad H| = {worst:e}")]
    InvariantRejected { name: String, worst: f64 },

    #[error("quadrature not converged with {nodes} nodes: gap {gap:e} > tol {tol:e}")]
    QuadratureNotConverged {
        nodes: usize,
        gap: f64,
        tol: f64,
        estimate: Vec<f64>,
    },

    #[error("newton diverged at iteration {iteration} (update norm {update_norm:e})")]
    NewtonDiverged { iteration: usize, update_norm: f64 },

    #[error("newton did not converge in {iterations} iterations (last update norm {update_norm:e})")]
    MaxIterations { iterations: usize, update_norm: f64 },

    #[error("defective or near-defective spectrum: eigenvector condition estimate {condition:e}")]
    DefectiveSpectrum { condition: f64 },

    #[error("block solver unavailable: E has complex or repeated eigenvalues")]
    BlockModeUnavailable,

    #[error("singular linear system in {0}")]
    Singular(&'static str),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for failures of the numerical solver, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::NonFinite(_)
                | Error::QuadratureNotConverged { .. }
                | Error::NewtonDiverged { .. }
                | Error::MaxIterations { .. }
                | Error::DefectiveSpectrum { .. }
                | Error::BlockModeUnavailable
                | Error::Singular(_)
        )
    }
}
