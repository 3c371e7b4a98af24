use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use acal_core::contestation::ContestError;
use acal_core::store::StoreError;
use acal_core::PipelineError;

/// Error body: `{"code": "...", "message": "..."}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(code = self.code, "{}", self.message);
        }
        let body = ErrorBody {
            code: self.code.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::CaseNotFound(_) => ApiError::new(StatusCode::NOT_FOUND, "CASE_NOT_FOUND", message),
            StoreError::SessionNotFound { .. } => ApiError::new(StatusCode::NOT_FOUND, "SESSION_NOT_FOUND", message),
            StoreError::BadId(_) => ApiError::new(StatusCode::BAD_REQUEST, "BAD_ID", message),
            StoreError::CaseExists(_) => ApiError::new(StatusCode::CONFLICT, "CASE_EXISTS", message),
            StoreError::Corrupt { .. } | StoreError::Io { .. } => ApiError::internal(message),
        }
    }
}

impl From<ContestError> for ApiError {
    fn from(e: ContestError) -> Self {
        let status = match e {
            ContestError::UnknownProposal(_) => StatusCode::NOT_FOUND,
            ContestError::ProposalClosed(_) => StatusCode::CONFLICT,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        ApiError::new(status, e.code(), e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let message = e.to_string();
        match e {
            PipelineError::Config(_) => ApiError::new(StatusCode::BAD_REQUEST, "INVALID_CONFIG", message),
            PipelineError::Task(_) => ApiError::new(StatusCode::BAD_REQUEST, "INVALID_TASK", message),
            // A stage can only fail hard when a backend is unavailable.
            PipelineError::Stage { .. } => ApiError::new(StatusCode::BAD_GATEWAY, "STAGE_FAILED", message),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", e.body_text())
    }
}
