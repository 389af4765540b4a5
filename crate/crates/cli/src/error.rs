use thiserror::Error;

/// Command failure, mapped onto the process exit status.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("simulation error: {0}")]
    Simulation(String),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("comparison exceeded tolerance: {0}")]
    Mismatch(String),
    #[error("missing output: {0}")]
    MissingOutput(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Simulation(_) => 2,
            CliError::Fit(_) => 3,
            CliError::Mismatch(_) => 4,
            CliError::MissingOutput(_) => 5,
            CliError::Io(_) => 6,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// Sort a library error into simulation or fit failures.
impl From<rotphase::Error> for CliError {
    fn from(e: rotphase::Error) -> Self {
        use rotphase::Error as E;
        match e {
            E::NoConvergence { .. }
            | E::IllConditioned { .. }
            | E::AmbiguousCalibration { .. }
            | E::NoPeak { .. } => CliError::Fit(e.to_string()),
            E::Io(m) => CliError::Io(m),
            other => CliError::Simulation(other.to_string()),
        }
    }
}
