use serde::Serialize;

use emcc_core::Error;

/// Process exit codes. Stable: scripts may rely on them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitCode {
    Ok = 0,
    Failure = 1,
    Incompatible = 2,
    Io = 3,
    InvalidInput = 4,
}

impl ExitCode {
    pub fn code(self) -> i32 {
        self as i32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub exit: ExitCode,
    pub kind: &'static str,
    pub message: String,
}

/// What goes to stderr on failure, one JSON object on one line.
#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: ErrorBody<'a>,
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    exit_code: i32,
    message: &'a str,
}

impl CliError {
    pub fn new(exit: ExitCode, kind: &'static str, message: impl Into<String>) -> Self {
        CliError {
            exit,
            kind,
            message: message.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ErrorRecord {
            error: ErrorBody {
                kind: self.kind,
                exit_code: self.exit.code(),
                message: &self.message,
            },
        })
        .expect("serializable")
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (exit, kind) = match &e {
            Error::Io { .. } => (ExitCode::Io, "io"),
            Error::Parse { .. } => (ExitCode::InvalidInput, "parse"),
            Error::InvalidModel(_)
            | Error::UnknownVariable(_)
            | Error::InvalidState { .. }
            | Error::InvalidParams(_)
            | Error::InvalidData(_)
            | Error::InvalidIntervention(_)
            | Error::CardinalityCap { .. }
            | Error::InvalidQuery(_)
            | Error::InvalidConfig(_)
            | Error::ImpossibleRecord { .. } => (ExitCode::InvalidInput, "invalid_input"),
            Error::EmptyParamSet(_) => (ExitCode::Incompatible, "incompatible"),
            Error::ZeroEvidence | Error::ZeroProbabilityRecord { .. } | Error::FactorTooLarge(_) => {
                (ExitCode::Failure, "computation")
            }
        };
        CliError::new(exit, kind, e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
