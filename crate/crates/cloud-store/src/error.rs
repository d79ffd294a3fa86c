use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("invalid client credentials")]
    InvalidCredentials,
    #[error("missing or unknown bearer token")]
    Unauthorized,
    #[error("token expired")]
    TokenExpired,
    #[error("token lacks the {0} scope")]
    Forbidden(&'static str),
    #[error("no trace {0}")]
    NotFound(String),
    #[error("multipart part `{0}` missing")]
    MissingPart(&'static str),
    #[error("manifest invalid: {0}")]
    ManifestInvalid(String),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("storage full: {0}")]
    StorageFull(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ApiError {
    pub fn code(&self) -> &'static str {
        match self {
            ApiError::InvalidCredentials => "invalid-credentials",
            ApiError::Unauthorized => "unauthorized",
            ApiError::TokenExpired => "token-expired",
            ApiError::Forbidden(_) => "forbidden",
            ApiError::NotFound(_) => "not-found",
            ApiError::MissingPart(_) => "missing-part",
            ApiError::ManifestInvalid(_) => "manifest-invalid",
            ApiError::BadRequest(_) => "bad-request",
            ApiError::StorageFull(_) => "storage-full",
            ApiError::Internal(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::InvalidCredentials | ApiError::Unauthorized | ApiError::TokenExpired => StatusCode::UNAUTHORIZED,
            ApiError::Forbidden(_) => StatusCode::FORBIDDEN,
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::MissingPart(_) | ApiError::ManifestInvalid(_) | ApiError::BadRequest(_) => {
                StatusCode::BAD_REQUEST
            }
            ApiError::StorageFull(_) => StatusCode::INSUFFICIENT_STORAGE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        if e.kind() == std::io::ErrorKind::StorageFull {
            ApiError::StorageFull(e.to_string())
        } else {
            ApiError::Internal(e.to_string())
        }
    }
}

impl From<rusqlite::Error> for ApiError {
    fn from(e: rusqlite::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if matches!(self, ApiError::Internal(_)) {
            tracing::error!("{self}");
        }
        let body = ErrorBody {
            error: self.code().to_string(),
            detail: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
