use imuspeed_core::dataset::DatasetError;
use imuspeed_core::labels::LabelError;
use imuspeed_core::logs::LogError;
use imuspeed_core::nav::NavError;
use imuspeed_core::net::NetError;
use imuspeed_core::sim::SimError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("divergence: {0}")]
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }
}

pub fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

impl From<LogError> for CliError {
    fn from(e: LogError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<LabelError> for CliError {
    fn from(e: LabelError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Diverged { .. } => CliError::Diverged(e.to_string()),
            NetError::InvalidConfig(_)
            | NetError::InvalidTrainConfig(_)
            | NetError::ConfigMismatch { .. } => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}

impl From<NavError> for CliError {
    fn from(e: NavError) -> Self {
        match e {
            NavError::Model(inner) => inner.into(),
            NavError::MissingTruth(_) => CliError::Config(e.to_string()),
            _ => CliError::Io(e.to_string()),
        }
    }
}
