//! Error type shared by all simulation modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A scenario violates the per-subcarrier multiplicative channel model
    /// (e.g. a round-trip delay at or beyond the cyclic prefix).
    #[error("model violation: {0}")]
    ModelViolation(String),

    /// |alpha|^2 == |beta|^2, so the imbalance transform is not invertible.
    #[error("singular imbalance: |alpha|^2 - |beta|^2 = 0")]
    SingularImbalance,

    #[error("zero divisor encountered at subcarrier {subcarrier}, symbol {symbol}")]
    ZeroDivisor { subcarrier: usize, symbol: usize },

    /// An adaptive filter error magnitude exceeded the divergence bound.
    #[error("filter diverged at iteration {iteration} (|e| = {error_abs:.3e})")]
    Divergence { iteration: usize, error_abs: f64 },

    /// An RLS covariance matrix blew up.
    #[error("filter unstable at iteration {iteration} (covariance trace {trace:.3e})")]
    Instability { iteration: usize, trace: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
