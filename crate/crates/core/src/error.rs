use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
///
/// Variants are grouped by how a caller is expected to react: input and
/// validation problems, numeric failures, and solver nonconvergence. The
/// [`Error::category`] method exposes that grouping for exit-code mapping.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("point ({x}, {y}) is outside the domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("admissibility violated: {0}")]
    Admissibility(String),

    #[error("singular evaluation: {0}")]
    Singularity(String),

    #[error("degenerate electrode pair: {0}")]
    DegeneratePair(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("matrix inversion failed: {0}")]
    Inversion(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("conformal map construction did not converge (residual {residual:.3e}): {message}")]
    MapConstruction { residual: f64, message: String },

    #[error("conformal map evaluation failed: {0}")]
    MapEvaluation(String),

    #[error("mesh generation failed: {0}")]
    Mesh(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverNonconvergence { iterations: usize, residual: f64 },

    #[error("spectrum is identically zero; there is no inclusion to locate")]
    ZeroSpectrum,

    #[error("singular value {index} is {value:.3e}, below the cutoff relative to the largest; use a smaller order M")]
    TruncationOrder { index: usize, value: f64 },

    #[error("dipole probe is orthogonal to all retained singular vectors")]
    DegenerateProbe,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse classification used by the command-line harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Numeric,
    Nonconvergence,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Input => 2,
            ErrorCategory::Numeric => 3,
            ErrorCategory::Nonconvergence => 4,
        }
    }
}

impl Error {
    pub fn category(&self) -> ErrorCategory {
        use Error::*;
        match self {
            Geometry(_) | OutsideDomain { .. } | Admissibility(_) | Dimension(_) | OutOfRange(_)
            | Validation(_) | Parse { .. } | Io { .. } | DegeneratePair(_) => ErrorCategory::Input,
            Singularity(_) | Inversion(_) | ZeroSpectrum | TruncationOrder { .. } | DegenerateProbe
            | MapEvaluation(_) => ErrorCategory::Numeric,
            MapConstruction { .. } | Mesh(_) | SolverNonconvergence { .. } => {
                ErrorCategory::Nonconvergence
            }
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { context: context.into(), message: message.into() }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
