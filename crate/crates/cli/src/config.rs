use std::fmt;
use std::path::PathBuf;

use memtrack_core::memory::BankConfig;
use memtrack_core::synth::ProposerParams;
use serde::Deserialize;

/// CLI failure with its exit code: 2 for user/config errors, 3 for internal
/// invariant violations.
#[derive(Debug)]
pub enum CliError {
    User(String),
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::User(_) => 2,
            CliError::Internal(_) => 3,
        }
    }

    pub fn user(msg: impl Into<String>) -> Self {
        CliError::User(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::User(msg) => write!(f, "{msg}"),
            CliError::Internal(msg) => write!(f, "internal invariant violation: {msg}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        CliError::User(err.to_string())
    }
}

impl From<memtrack_core::Error> for CliError {
    fn from(err: memtrack_core::Error) -> Self {
        use memtrack_core::Error as E;
        match &err {
            // breaches of contracts the pipeline itself maintains
            E::ProposerContract(_)
            | E::DuplicateOrmFrame(_)
            | E::DuplicatePrompt(_)
            | E::InvalidCandidateSet(_) => CliError::Internal(err.to_string()),
            E::AblationCell { source, .. } => match CliError::from_ref(source) {
                CliError::Internal(_) => CliError::Internal(err.to_string()),
                CliError::User(_) => CliError::User(err.to_string()),
            },
            _ => CliError::User(err.to_string()),
        }
    }
}

impl CliError {
    fn from_ref(err: &memtrack_core::Error) -> Self {
        use memtrack_core::Error as E;
        match err {
            E::ProposerContract(_)
            | E::DuplicateOrmFrame(_)
            | E::DuplicatePrompt(_)
            | E::InvalidCandidateSet(_) => CliError::Internal(err.to_string()),
            _ => CliError::User(err.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Config for `run`. Unknown keys are rejected; `bank` and `proposer`
/// accept partial overrides on top of the defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Builtin scenario name or path to a script JSON.
    pub scenario: String,
    /// fifo | cam | orm | ma
    pub policy: String,
    pub seed: u64,
    #[serde(default)]
    pub bank: BankConfig,
    #[serde(default)]
    pub proposer: ProposerParams,
    pub out_dir: PathBuf,
}

/// Config for `ablate`.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateConfig {
    pub scenarios: Vec<String>,
    pub policies: Vec<String>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub bank: BankConfig,
    #[serde(default)]
    pub proposer: ProposerParams,
    pub out_dir: PathBuf,
}

pub fn parse_json_strict<T: serde::de::DeserializeOwned>(
    text: &str,
    what: &str,
) -> CliResult<T> {
    serde_json::from_str(text)
        .map_err(|e| CliError::user(format!("{what}: line {} column {}: {e}", e.line(), e.column())))
}
