use groundloop::confidence::ConfidenceError;
use groundloop::evaluation::EvalError;
use groundloop::gateway::GatewayError;
use groundloop::geometry::GeometryError;
use groundloop::preprocess::PreprocessError;
use groundloop::raster::RasterError;
use groundloop::simulator::SimError;
use groundloop::supervision::SupervisionError;
use groundloop::synthesis::SynthesisError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("backend error: {0}")]
    Backend(String),
    #[error("task failed: {0}")]
    TaskFailed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Backend(_) => 3,
            CliError::TaskFailed(_) => 4,
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Backend(_) | GatewayError::ScriptExhausted(_) | GatewayError::Parse { .. } | GatewayError::Schema(_) => {
                CliError::Backend(e.to_string())
            }
            GatewayError::Config(_) | GatewayError::MissingPlaceholder(_) | GatewayError::UnknownPlaceholder(_) => {
                CliError::Config(e.to_string())
            }
            GatewayError::Io(_) => CliError::Input(e.to_string()),
        }
    }
}

impl From<SupervisionError> for CliError {
    fn from(e: SupervisionError) -> Self {
        match e {
            SupervisionError::Gateway(g) => g.into(),
            SupervisionError::InvalidConstraints(_) | SupervisionError::InvalidParams(_) => CliError::Config(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<SynthesisError> for CliError {
    fn from(e: SynthesisError) -> Self {
        match e {
            SynthesisError::Gateway(g) => g.into(),
            SynthesisError::MaxIterationsExceeded(_) => CliError::TaskFailed(e.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Supervision(s) => s.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

macro_rules! input_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Input(e.to_string())
            }
        }
    )*};
}

input_errors!(GeometryError, PreprocessError, ConfidenceError, RasterError, SimError, std::io::Error, serde_json::Error);
