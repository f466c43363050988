use std::process::ExitCode;

pub type Result<T> = std::result::Result<T, CliError>;

/// Failures grouped by the exit code they produce.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Bad flags, config files or inputs; detected before or instead of work.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime fault: {0}")]
    Runtime(String),
    /// Training or inference produced non-finite values.
    #[error("numeric abort: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }

    pub fn to_exit(&self) -> ExitCode {
        ExitCode::from(self.exit_code())
    }
}

impl From<pfn_core::Error> for CliError {
    fn from(e: pfn_core::Error) -> Self {
        use pfn_core::Error as E;
        let msg = e.to_string();
        match e {
            E::Diverged { .. } | E::NonFinite { .. } => CliError::Numeric(msg),
            E::Parameter(_) | E::Parse { .. } | E::Validation(_) | E::Capacity(_) | E::Class { .. } => {
                CliError::Config(msg)
            }
            _ => CliError::Runtime(msg),
        }
    }
}

impl From<pfn_bench::Error> for CliError {
    fn from(e: pfn_bench::Error) -> Self {
        use pfn_bench::Error as E;
        match e {
            E::Core(c) => c.into(),
            E::Config(m) => CliError::Config(m),
            E::Parameter(_) | E::Parse { .. } => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<pfn_stats::Error> for CliError {
    fn from(e: pfn_stats::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}
