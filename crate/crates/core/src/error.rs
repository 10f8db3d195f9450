use thiserror::Error;

/// Rejected configuration, reported before a simulation starts.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown congestion control algorithm '{name}' (valid: {valid})")]
    UnknownAlgorithm { name: String, valid: String },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
