//! Config-driven front end for the `lmex` library.

pub mod commands;
pub mod config;

pub use commands::{run_command, Command, RunContext};
pub use config::{parse_config, RunConfig};

/// Failure of a CLI run, mapped to a process exit code.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Divergence(String),
    #[error("{0}")]
    Verification(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Divergence(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io(_) | CliError::Runtime(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Divergence(_) => "divergence",
            CliError::Verification(_) => "verification",
            CliError::Io(_) => "io",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// Single line for the error stream: `error kind=<kind> code=<n>: <msg>`.
    pub fn line(&self) -> String {
        format!("error kind={} code={}: {}", self.kind(), self.exit_code(), self.to_string().replace('\n', " "))
    }
}

impl From<lmex::Error> for CliError {
    fn from(e: lmex::Error) -> Self {
        use lmex::Error as E;
        match e {
            E::Divergence { .. } => CliError::Divergence(e.to_string()),
            E::InvalidGroup(_)
            | E::InvalidParameter(_)
            | E::InvalidTau(_)
            | E::InvalidOrder(_)
            | E::PlanMismatch(_)
            | E::NonCommensurate { .. }
            | E::AsymmetricCoupling { .. }
            | E::SiteOutOfRange { .. }
            | E::EqualSites(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
