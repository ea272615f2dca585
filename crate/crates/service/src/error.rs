use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use packlab_core::Error;
use serde_json::json;

/// Error body: `{"error": {"code": ..., "message": ...}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, code: "bad_request", message: message.into() }
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, code: "not_found", message: message.into() }
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::CONFLICT, code: "conflict", message: message.into() }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, code: "internal", message: message.into() }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Validation(_) | Error::ComboExplosion { .. } => {
                ApiError { status: StatusCode::BAD_REQUEST, code: "validation", message }
            }
            Error::MalformedDocument(_) | Error::SchemaViolation(_) => ApiError::bad_request(message),
            Error::UnknownDimension(_) => {
                ApiError { status: StatusCode::BAD_REQUEST, code: "unknown_dimension", message }
            }
            Error::NotFound(_) => ApiError::not_found(message),
            Error::Conflict { .. } => ApiError::conflict(message),
            _ => ApiError::internal(message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!("{}", self.message);
        }
        let body = json!({ "error": { "code": self.code, "message": self.message } });
        (self.status, Json(body)).into_response()
    }
}
