use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("divergent expression: {0}")]
    Divergence(String),

    #[error("non-physical sideband ratio {0}: must be strictly greater than 1")]
    NonPhysicalRatio(f64),

    #[error("fit did not converge after {iterations} iterations ({reason})")]
    NotConverged {
        iterations: usize,
        reason: String,
        last_iterate: Vec<f64>,
    },

    #[error("degenerate fit input: {0}")]
    DegenerateFit(String),

    #[error("unresolvable doublet: sideband separation {separation_hz} Hz below fwhm/5 ({fwhm_hz} Hz)")]
    UnresolvableDoublet { separation_hz: f64, fwhm_hz: f64 },

    #[error("rank-deficient design matrix in polynomial regression")]
    RankDeficient,

    #[error("no detuning minimum inside the bracket ({0})")]
    NoMinimumInBracket(String),

    #[error("{location}: {message}")]
    Parse { location: String, message: String },

    #[error("invalid spectrum: {0}")]
    InvalidSpectrum(String),

    #[error("{stage}: {message}")]
    Pipeline { stage: &'static str, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("report serialization: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn pipeline(stage: &'static str, message: impl Into<String>) -> Self {
        Error::Pipeline {
            stage,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. } | Error::InvalidSpectrum(_) | Error::InvalidParameter { .. } => 2,
            Error::Io { .. } => 4,
            Error::Json(_) => 2,
            _ => 3,
        }
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {value}")))
    }
}

pub(crate) fn ensure_non_negative(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite and >= 0, got {value}")))
    }
}

pub(crate) fn ensure_finite(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {value}")))
    }
}
