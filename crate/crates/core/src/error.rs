use thiserror::Error;

#[derive(Debug, Error)]
pub enum CamabError {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration value failed validation. `field` is the dotted path
    /// of the offending entry.
    #[error("invalid configuration at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("true means unavailable: {0}")]
    MissingTrueMeans(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl CamabError {
    pub fn domain(msg: impl Into<String>) -> Self {
        CamabError::Domain(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        CamabError::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, CamabError>;
