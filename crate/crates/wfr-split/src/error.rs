use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("numeric input error: {0}")]
    NumericInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular matrix: smallest eigenvalue {min_eig:e} below tolerance {tol:e}")]
    Singular { min_eig: f64, tol: f64 },

    #[error("singular configuration: resolvent eigenvalue {eigenvalue:e} is numerically zero")]
    SingularConfiguration { eigenvalue: f64 },

    #[error("step-size error: {0}")]
    StepSize(String),

    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    #[error("degenerate ratio: {0}")]
    DegenerateRatio(String),

    #[error("degenerate density: {0}")]
    DegenerateDensity(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
