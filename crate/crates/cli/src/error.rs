use polarwarp_core::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("i/o: {0}")]
    Io(String),
    #[error("config: {0}")]
    Config(String),
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("evaluator coverage: {0}")]
    Coverage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 2,
            CliError::Config(_) => 3,
            CliError::Metadata(_) => 4,
            CliError::Coverage(_) => 5,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Io(_)
            | CoreError::Codec(_)
            | CoreError::Parse(_)
            | CoreError::UnsupportedEncoding(_)
            | CoreError::DuplicateSlice(_)
            | CoreError::Json(_)
            | CoreError::Csv(_) => CliError::Io(msg),
            CoreError::MissingMetadata(_) | CoreError::InvalidGeometry(_) => CliError::Metadata(msg),
            CoreError::Coverage(_) => CliError::Coverage(msg),
            CoreError::InvalidArgument(_) | CoreError::DegenerateInput(_) => CliError::Runtime(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
