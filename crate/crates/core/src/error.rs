use thiserror::Error;

/// Library-wide error type.
///
/// Every variant carries the name of the module that raised it so that the
/// CLI and the C bindings can surface a stable, module-qualified code.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("{module}: domain error: {msg}")]
    Domain { module: &'static str, msg: String },

    #[error("{module}: series did not converge within {max_terms} terms ({msg})")]
    Truncation {
        module: &'static str,
        max_terms: usize,
        msg: String,
    },

    #[error("lapinv: inversion failed: {0}")]
    Inversion(String),

    #[error("lapinv: density grid error: {0}")]
    Grid(String),

    #[error("{module}: admissibility violation: {msg}")]
    Admissibility { module: &'static str, msg: String },

    #[error("{module}: quadrature failed: {msg}")]
    Quadrature { module: &'static str, msg: String },

    #[error("simulate: {0}")]
    Sampling(String),

    #[error("calibrate: {0}")]
    Calibration(String),

    #[error("{0}")]
    Parse(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn domain(module: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain {
            module,
            msg: msg.into(),
        }
    }

    /// Stable machine-readable code, `module.kind`.
    pub fn code(&self) -> String {
        match self {
            Error::Domain { module, .. } => format!("{module}.domain"),
            Error::Truncation { module, .. } => format!("{module}.truncation"),
            Error::Inversion(_) => "lapinv.inversion".into(),
            Error::Grid(_) => "lapinv.grid".into(),
            Error::Admissibility { module, .. } => format!("{module}.admissibility"),
            Error::Quadrature { module, .. } => format!("{module}.quadrature"),
            Error::Sampling(_) => "simulate.sampling".into(),
            Error::Calibration(_) => "calibrate.calibration".into(),
            Error::Parse(_) => "cli.usage".into(),
            Error::Io(_) => "cli.io".into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
