use thiserror::Error;

/// Errors produced by the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("value not aligned with the grid: {0}")]
    Grid(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("potential does not cover the required interval: {0}")]
    Coverage(String),

    #[error("defect frame computation failed: {0}")]
    DefectFrame(String),

    #[error("degenerate matrix encountered: {0}")]
    Degeneracy(String),

    #[error("operator is not positive semidefinite: {0}")]
    NotPsd(String),

    #[error("triangular factorization failed: {0}")]
    Factorization(String),

    #[error("polar decomposition failed: {0}")]
    Polar(String),

    #[error("diagonal sums do not converge: {0}")]
    Divergence(String),

    #[error("model operator assembly failed: {0}")]
    Model(String),

    #[error("potential recovery rejected: off-diagonal mass {offdiag_mass}")]
    RecoveryRejected { offdiag_mass: f64 },

    #[error("nest violation: {0}")]
    NestViolation(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
