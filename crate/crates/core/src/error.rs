use thiserror::Error;

/// Failures raised by the numerical pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// The potential could not be split into a bounded compactly supported
    /// part plus a Kato-small remainder on the working grid.
    #[error("potential is not numerically in the Kato closure class: {0}")]
    ClassMembership(String),

    #[error("threshold search failed: {0}")]
    Threshold(String),

    #[error("Born series diverges: {0}")]
    Divergence(String),

    #[error("anchored expansion guard failed: |S|*|B| = {ratio:.6} >= 1")]
    AnchorGuard { ratio: f64 },

    /// `I + V R0(lambda)` is numerically singular: an embedded eigenvalue or a
    /// resonance sits on `[0, inf)`.
    #[error("spectral assumption violated: {0}")]
    Spectral(String),

    #[error("symbol error: {0}")]
    Symbol(String),

    #[error("regime error: {0}")]
    Regime(String),

    #[error("no contraction: {0}")]
    NoContraction(String),

    #[error("grid error: {0}")]
    Grid(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
