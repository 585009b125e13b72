//! Error classification shared by the CLI (exit codes) and the server
//! (status codes).

use lazylint_core::detector::DetectorError;
use lazylint_core::feedback::FeedbackError;
use lazylint_core::pipeline::{PipelineError, PipelineStage};
use lazylint_core::segmenter::SegmenterError;
use thiserror::Error;

use crate::config::ConfigError;

#[derive(Debug, Error)]
pub enum AppError {
    /// Bad input, configuration or artifact.
    #[error("{0}")]
    Invalid(String),
    /// The LLM gateway failed (transport, decode, or an unscripted replay).
    #[error("{message}")]
    Gateway { stage: Option<String>, message: String },
}

impl AppError {
    pub fn invalid(err: impl std::fmt::Display) -> Self {
        AppError::Invalid(err.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Invalid(_) => 1,
            AppError::Gateway { .. } => 2,
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(err: ConfigError) -> Self {
        AppError::invalid(err)
    }
}

fn gateway(stage: PipelineStage, err: impl std::fmt::Display) -> AppError {
    AppError::Gateway {
        stage: Some(stage.as_str().to_string()),
        message: err.to_string(),
    }
}

impl From<PipelineError> for AppError {
    fn from(err: PipelineError) -> Self {
        if err.is_gateway() {
            gateway(err.stage(), err)
        } else {
            AppError::invalid(err)
        }
    }
}

impl From<SegmenterError> for AppError {
    fn from(err: SegmenterError) -> Self {
        PipelineError::from(err).into()
    }
}

impl From<DetectorError> for AppError {
    fn from(err: DetectorError) -> Self {
        PipelineError::from(err).into()
    }
}

impl From<FeedbackError> for AppError {
    fn from(err: FeedbackError) -> Self {
        match err {
            FeedbackError::Gateway { .. } => gateway(PipelineStage::Feedback, err),
            other => AppError::invalid(other),
        }
    }
}
