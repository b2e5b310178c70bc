use std::path::Path;
use std::process::ExitCode;

use ctfa_core::{ConfigError, DataError, Error, StatsError};

pub const OK: u8 = 0;
pub const VALIDATION: u8 = 1;
pub const NUMERICAL: u8 = 2;
pub const VERIFICATION: u8 = 3;
pub const IO: u8 = 4;

/// Invalid user input that has no core error type.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct Validation(pub String);

/// One or more verification checks failed.
#[derive(Debug, thiserror::Error)]
#[error("{0} check case(s) failed")]
pub struct VerificationFailed(pub usize);

pub fn io(path: &Path, e: std::io::Error) -> anyhow::Error {
    anyhow::Error::new(e).context(format!("cannot access {}", path.display()))
}

fn data_code(e: &DataError) -> u8 {
    match e {
        DataError::Io { .. } => IO,
        _ => VALIDATION,
    }
}

/// Exit code for an error chain: the first recognised cause decides.
pub fn code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Data(d) => data_code(d),
                Error::Stats(_) => NUMERICAL,
                Error::Config(_) => VALIDATION,
            };
        }
        if let Some(d) = cause.downcast_ref::<DataError>() {
            return data_code(d);
        }
        if cause.is::<StatsError>() {
            return NUMERICAL;
        }
        if cause.is::<ConfigError>() || cause.is::<Validation>() || cause.is::<serde_json::Error>() {
            return VALIDATION;
        }
        if cause.is::<VerificationFailed>() {
            return VERIFICATION;
        }
        if cause.is::<std::io::Error>() {
            return IO;
        }
    }
    VALIDATION
}

pub fn report(result: anyhow::Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::from(OK),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(code(&e))
        }
    }
}
