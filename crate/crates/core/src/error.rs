use thiserror::Error;

/// Errors raised by the numerical routines.
///
/// The variants follow the failure classes of the library: bad input
/// (`Argument`, `Domain`, `Resolution`), loss of a structural property
/// (`Degeneracy`, `Singularity`, `Pole`, `Basin`), and run-time breakdown
/// (`BlowUp`, `Integrator`, `Wrap`, `Accuracy`).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("outside the domain of validity: {0}")]
    Domain(String),
    #[error("grid too coarse: {0}")]
    Resolution(String),
    #[error("degenerate frame: {0}")]
    Degeneracy(String),
    #[error("singular system: {0}")]
    Singularity(String),
    #[error("pole or near-singular point: {0}")]
    Pole(String),
    #[error("projection left the basin: {0}")]
    Basin(String),
    #[error("velocity reached the cap: {0}")]
    BlowUp(String),
    #[error("integrator error: {0}")]
    Integrator(String),
    #[error("wave wrap-around: {0}")]
    Wrap(String),
    #[error("quadrature accuracy: {0}")]
    Accuracy(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in CLI failure markers.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Domain(_) => "domain",
            Error::Resolution(_) => "resolution",
            Error::Degeneracy(_) => "degeneracy",
            Error::Singularity(_) => "singularity",
            Error::Pole(_) => "pole",
            Error::Basin(_) => "basin",
            Error::BlowUp(_) => "blowup",
            Error::Integrator(_) => "integrator",
            Error::Wrap(_) => "wrap",
            Error::Accuracy(_) => "accuracy",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
