//! Annotation campaign service.
//!
//! A campaign is a fixed [`CampaignDefinition`] (pools and assignments) plus
//! a state rebuilt by replaying an append-only event log. Annotators fetch
//! anonymized tasks and submit judgments over HTTP; operators read live
//! scores and export a JSON-lines bundle.

pub mod bundle;
pub mod campaign;
pub mod config;
pub mod engine;
pub mod http;
pub mod log;
pub mod sim;
pub mod state;

use axum::http::StatusCode;
use thiserror::Error;

use crate::protocol::{ProtocolError, ValidationError};

pub use bundle::Bundle;
pub use campaign::{build_definition, CampaignConfig, CampaignDefinition, ContextPlan};
pub use config::ServiceConfig;
pub use engine::CampaignHandle;
pub use http::{router, Service};
pub use state::{CampaignState, Event, EventKind, NextTask, Submission, Task};

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown campaign `{0}`")]
    UnknownCampaign(String),
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("missing or invalid bearer token")]
    Unauthorized,
    #[error("validation failed: {0}")]
    ValidationFailed(ValidationError),
    #[error("stale task: {0}")]
    StaleTask(String),
    #[error("no tasks remaining")]
    NoTasksRemaining,
    #[error("invalid campaign config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("storage: {0}")]
    Storage(String),
    #[error("bundle line {line}: {message}")]
    Bundle { line: usize, message: String },
}

impl From<ValidationError> for ServiceError {
    fn from(e: ValidationError) -> Self {
        ServiceError::ValidationFailed(e)
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownCampaign(_) => "unknown_campaign",
            ServiceError::UnknownSession(_) => "unknown_session",
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::ValidationFailed(_) => "validation_failed",
            ServiceError::StaleTask(_) => "stale_task",
            ServiceError::NoTasksRemaining => "no_tasks_remaining",
            ServiceError::InvalidConfig(_) => "invalid_config",
            ServiceError::Protocol(_) => "protocol_error",
            ServiceError::Storage(_) => "storage_error",
            ServiceError::Bundle { .. } => "bundle_error",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::UnknownCampaign(_) | ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::ValidationFailed(_) | ServiceError::InvalidConfig(_) | ServiceError::Protocol(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            ServiceError::StaleTask(_) => StatusCode::CONFLICT,
            ServiceError::NoTasksRemaining => StatusCode::GONE,
            ServiceError::Bundle { .. } => StatusCode::BAD_REQUEST,
            ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}
