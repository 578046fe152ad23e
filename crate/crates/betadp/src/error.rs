//! Error type shared across the crate.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input while parsing a graph, schedule, or estimate file.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Two inputs that must agree on the node count do not.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// An argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A degree target is incompatible with a finite fitted parameter
    /// (isolated or saturated node).
    #[error("degree target {value} for node {node} is outside the open range (0, {max}); no finite fit exists")]
    DegenerateDegree { node: usize, value: f64, max: f64 },

    /// The fixed-point solver ran out of sweeps. Carries the last iterate so
    /// callers can inspect how close it got.
    #[error("fixed-point solver did not converge: residual {residual:.3e} after {sweeps} sweeps")]
    NoConvergence {
        sweeps: usize,
        residual: f64,
        last_iterate: Vec<f64>,
    },

    /// Too many bootstrap replicates were dropped for a node to form a
    /// variance estimate.
    #[error("node {node}: only {valid} of {total} bootstrap replicates were valid; need at least 2")]
    TooFewReplicates {
        node: usize,
        valid: usize,
        total: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
