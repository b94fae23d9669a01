use axum::extract::rejection::JsonRejection;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use varnet::VarNetError;

use crate::api::ErrorBody;

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub kind: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<VarNetError> for ApiError {
    fn from(e: VarNetError) -> Self {
        use VarNetError::*;
        let (status, kind) = match &e {
            Shape(_) => (StatusCode::UNPROCESSABLE_ENTITY, "shape"),
            Spec(_) => (StatusCode::UNPROCESSABLE_ENTITY, "spec"),
            Metadata { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "metadata"),
            Grid(_) => (StatusCode::UNPROCESSABLE_ENTITY, "grid"),
            Batch(_) => (StatusCode::UNPROCESSABLE_ENTITY, "batch"),
            Domain(_) => (StatusCode::UNPROCESSABLE_ENTITY, "domain"),
            Format(_) => (StatusCode::UNPROCESSABLE_ENTITY, "format"),
            Prior(_) => (StatusCode::INTERNAL_SERVER_ERROR, "prior"),
            Numerics { .. } => (StatusCode::INTERNAL_SERVER_ERROR, "numerics"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        Self::new(status, kind, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", r.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}: {}", self.kind, self.message);
        }
        let body = ErrorBody {
            error: self.kind.to_string(),
            message: self.message,
        };
        (self.status, Json(body)).into_response()
    }
}
