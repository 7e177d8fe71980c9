use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] hdc_hwcal::Error),
    #[error("compare: {0}")]
    Compare(String),
    #[error("{}: {source}", path.display())]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    /// 2 for configuration problems, 3 for data problems, 4 for numeric failure.
    pub fn exit_code(&self) -> i32 {
        use hdc_hwcal::Error as E;
        match self {
            CliError::Config(_) | CliError::Compare(_) => 2,
            CliError::Core(e) if e.is_data() => 3,
            CliError::Core(E::InvalidParameter { .. } | E::InvalidEnsemble(_) | E::InvalidDimension(_)) => 2,
            CliError::Core(E::Divergence { .. } | E::Overflow { .. } | E::NonFinite { .. }) => 4,
            CliError::Core(_) | CliError::Output { .. } => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
