use std::fmt;
use std::process::ExitCode;

use holoretrieve::Error;

/// Command failures, each mapped to its exit status.
#[derive(Debug)]
pub enum Failure {
    /// One `field.path: reason` line per invalid field.
    Validation(Vec<String>),
    NotConverged(String),
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            Failure::Validation(_) => 2,
            Failure::NotConverged(_) => 3,
            Failure::Io(_) => 4,
        })
    }

    pub fn io(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        Failure::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(lines) => {
                writeln!(f, "invalid configuration:")?;
                for l in lines {
                    writeln!(f, "  {l}")?;
                }
                Ok(())
            }
            Failure::NotConverged(msg) => write!(f, "not converged: {msg}"),
            Failure::Io(msg) => write!(f, "i/o error: {msg}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } | Error::Stagnation => Failure::NotConverged(e.to_string()),
            Error::InvalidParameter { name, reason } => Failure::Validation(vec![format!("{name}: {reason}")]),
            other => Failure::Validation(vec![other.to_string()]),
        }
    }
}
