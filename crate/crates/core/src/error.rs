use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("unknown variable '{0}'")]
    UnknownVariable(String),

    #[error("invalid state {state} for variable '{var}'")]
    InvalidState { var: String, state: String },

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),

    #[error("exogenous variable '{var}' needs {required} states, cap is {cap}")]
    CardinalityCap { var: String, required: String, cap: usize },

    #[error("evidence has zero probability")]
    ZeroEvidence,

    #[error("record {record} of study {study} has zero probability under the current parameters")]
    ZeroProbabilityRecord { study: usize, record: String },

    #[error("record {record} of study {study} is impossible under the model for every parameter")]
    ImpossibleRecord { study: usize, record: String },

    #[error("factor over {0} states exceeds the size limit")]
    FactorTooLarge(u128),

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("no compatible parameters: {0}")]
    EmptyParamSet(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }

    pub fn parse(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
