//! Failure classes with fixed process exit codes.

use std::fmt;

/// Every CLI failure falls into one of four classes, each mapped to a
/// stable exit code so scripts can branch on what went wrong: `2` for bad
/// inputs, `3` for solver trouble, `4` for a specification-test rejection,
/// `5` for I/O. Success is `0`.
#[derive(Debug)]
pub enum CliError {
    /// Malformed configuration, flags, or data.
    Validation(String),
    /// The conic solver failed or an estimand's conditioning event is
    /// undefined on the constraint set.
    Solver(String),
    /// No mixture is compatible with the data at the calibrated slack
    /// level: the model itself is rejected.
    Rejection(String),
    /// Reading or writing a file failed.
    Io(String),
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Rejection(_) => 4,
            CliError::Io(_) => 5,
        }
    }

    /// Same class, with `prefix: ` prepended to the message; used to name
    /// the file a library error came from.
    pub fn prefixed(self, prefix: &str) -> Self {
        match self {
            CliError::Validation(m) => CliError::Validation(format!("{prefix}: {m}")),
            CliError::Solver(m) => CliError::Solver(format!("{prefix}: {m}")),
            CliError::Rejection(m) => CliError::Rejection(format!("{prefix}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{prefix}: {m}")),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (CliError::Validation(m)
        | CliError::Solver(m)
        | CliError::Rejection(m)
        | CliError::Io(m)) = self;
        f.write_str(m)
    }
}

impl From<callbound::Error> for CliError {
    fn from(e: callbound::Error) -> Self {
        use callbound::Error;
        // The rendered message already names the class; only the exit code
        // needs the variant.
        let msg = e.to_string();
        match e {
            Error::Domain(_) | Error::Dimension(_) | Error::Validation(_) => {
                CliError::Validation(msg)
            }
            Error::UndefinedConditioning(_) | Error::Solver(_) => CliError::Solver(msg),
            Error::SpecificationTest(_) => CliError::Rejection(msg),
            Error::Csv(_) | Error::Io(_) => CliError::Io(msg),
        }
    }
}
