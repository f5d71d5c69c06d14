use thiserror::Error;

/// Errors produced by estimation and inference routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid restriction: {0}")]
    InvalidRestriction(String),

    #[error("regressor matrix is rank deficient ({rank} of {cols} columns identified)")]
    SingularDesign { rank: usize, cols: usize },

    #[error("innovation covariance is not positive definite")]
    DegenerateCovariance,

    #[error("VAR is not stable: companion spectral radius {0:.6}")]
    Unstable(f64),

    #[error("bootstrap covariance of the restricted responses is rank deficient (min eigenvalue {min_eig:.3e}); Λ_qq must be positive definite")]
    RankDeficientLambda { min_eig: f64 },

    #[error("bootstrap failed: {accepted} usable replications after {attempts} attempts")]
    BootstrapExhausted { accepted: usize, attempts: usize },

    #[error("weight matrix is not symmetric positive definite")]
    NotPositiveDefinite,

    #[error("covariance of reduced-form responses has not been estimated")]
    MissingCovariance,

    #[error("acceptance sampler stalled: {accepted} accepted of {attempts} proposals")]
    LowAcceptance { accepted: usize, attempts: usize },

    #[error("not enough draws: {have} available, {need} required")]
    TooFewDraws { have: usize, need: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
