use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("environment window too short: need {needed} coordinates, have {available}")]
    WindowOverflow { needed: usize, available: usize },
    #[error("length violation: {0}")]
    Length(String),
    #[error("compute budget exceeded: {needed} > {budget} ({what})")]
    BudgetExceeded { what: &'static str, needed: u128, budget: u128 },
    #[error("transition matrix is not topologically mixing: {0}")]
    NotMixing(String),
    #[error("eigen-solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("inadmissible word or periodic orbit: {0}")]
    Inadmissible(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
