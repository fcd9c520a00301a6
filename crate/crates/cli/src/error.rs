use std::fmt;

/// Failure classes, each with its own process exit code.
#[derive(Debug)]
pub enum CliError {
    Argument(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Argument(_) => 2,
            CliError::Io(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Argument(m) => write!(f, "argument error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<clsketch::Error> for CliError {
    fn from(e: clsketch::Error) -> Self {
        use clsketch::Error as E;
        let msg = e.to_string();
        match e {
            E::DimensionMismatch { .. } | E::InvalidArgument(_) => CliError::Argument(msg),
            E::Io(_) | E::Corrupt(_) | E::Parse(_) | E::VersionMismatch { .. } | E::FingerprintMismatch { .. } => {
                CliError::Io(msg)
            }
            E::NotSymmetric { .. } | E::NotPsd { .. } | E::Numerical(_) => CliError::Numerical(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
