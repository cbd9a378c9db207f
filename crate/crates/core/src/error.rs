use std::path::PathBuf;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("dimension mismatch for {what}: expected {expected}, got {actual}")]
    Dimension { what: &'static str, expected: usize, actual: usize },

    /// A loss, return or observation became NaN/Inf. The message carries a
    /// short diagnostic snapshot.
    #[error("numerical divergence: {0}")]
    Divergence(String),

    #[error("malformed checkpoint: {0}")]
    Format(String),

    #[error("unsupported checkpoint format version {found} (this build reads {expected})")]
    Version { found: u32, expected: u32 },

    #[error("architecture mismatch: {0}")]
    Architecture(String),

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("missing input file {}", .0.display())]
    MissingInput(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("invalid config file: {0}")]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, actual })
    }
}
