//! Error type shared by every module in the crate.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// Variants are grouped by origin: `Dim`, `Singular`, `Numerical` and
/// `Divergence` are produced by the numerical code; `Input`, `Format` and
/// `Unsupported` by data loading; `Config` by option validation; `Usage` by
/// incorrect call sequences.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Operand shapes are incompatible with the requested operation.
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dim {
        context: &'static str,
        expected: String,
        found: String,
    },

    /// A matrix required to be (numerically) positive definite is not.
    #[error("{what} is numerically singular (smallest eigenvalue {min_eig:.3e})")]
    Singular { what: &'static str, min_eig: f64 },

    /// An iterative routine failed to reach its convergence target.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Training produced a non-finite objective value.
    #[error("training diverged at epoch {epoch}, batch {batch}: objective is not finite")]
    Divergence { epoch: usize, batch: usize },

    /// The API was called in an invalid order or with inconsistent state.
    #[error("usage error: {0}")]
    Usage(String),

    /// User-supplied data is structurally invalid (bad row, duplicate id, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// A binary or text file does not conform to its declared format.
    #[error("malformed file: {0}")]
    Format(String),

    /// The file is well-formed but uses a feature this crate does not handle.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Wrapped I/O failure, annotated with the path where possible.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Builds a `Dim` error; `expected`/`found` are human-readable shapes.
    pub fn dim(
        context: &'static str,
        expected: impl Into<String>,
        found: impl Into<String>,
    ) -> Self {
        Error::Dim {
            context,
            expected: expected.into(),
            found: found.into(),
        }
    }

    /// Wraps an I/O error with the path it occurred on.
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
