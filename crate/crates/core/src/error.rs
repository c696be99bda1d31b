use thiserror::Error;

/// Errors raised by divergence evaluation, tree construction and queries.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A coordinate lies outside (or too close to the edge of) its open domain.
    #[error("coordinate {dim} = {value} is outside the domain ({lo}, {hi})")]
    Domain { dim: usize, value: f64, lo: f64, hi: f64 },

    /// A point does not lie on the open probability simplex.
    #[error("point coordinates sum to {sum}, expected 1 for simplex-valued data")]
    NotOnSimplex { sum: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
