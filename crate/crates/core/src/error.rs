use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid behavior: {0}")]
    InvalidBehavior(String),

    #[error("conditional undefined: Q(a={a}|x={x}) = 0")]
    UndefinedConditional { x: usize, a: usize },

    #[error("attack infeasible (margin {margin})")]
    Infeasible { margin: f64 },

    #[error("channel efficiency is zero; no basis count reaches this distance")]
    UnreachableDistance,

    #[error("numerical failure: {message} (reconstruction {reconstruction:e}, violation {violation:e})")]
    Numerical {
        message: String,
        reconstruction: f64,
        violation: f64,
    },

    #[error("internal consistency error: {0}")]
    Consistency(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
