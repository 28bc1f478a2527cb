use implicit_filter::FilterError;

/// CLI failure classes, one per exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unusable configuration: parse failure, unknown key, invalid value,
    /// impossible run description. Exit code 1.
    Config(String),
    /// The run itself failed numerically (non-convergence, divergence,
    /// degenerate ensemble, ...). Exit code 2; the message carries the
    /// step/particle context the library attached.
    Numerical(String),
    /// Filesystem trouble while writing outputs. Exit code 2.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) | CliError::Io(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            CliError::Io(msg) => write!(f, "output error: {msg}"),
        }
    }
}

impl From<FilterError> for CliError {
    fn from(err: FilterError) -> Self {
        match err {
            FilterError::InvalidConfig(msg) => CliError::Config(msg),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
