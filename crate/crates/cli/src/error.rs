use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use crate::wire::SCHEMA_VERSION;

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("{0} not found")]
    NotFound(String),

    #[error("revision conflict: expected {expected}, current {current}")]
    Conflict { expected: u64, current: u64 },

    #[error("{message}")]
    Validation { field: Option<String>, message: String },

    #[error("{0}")]
    State(String),

    #[error("missing or invalid bearer token")]
    Unauthorized,

    #[error("unsupported content type; expected application/json")]
    UnsupportedMedia,

    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        ApiError::Validation {
            field: Some(field.into()),
            message: message.into(),
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Conflict { .. } | ApiError::State(_) => StatusCode::CONFLICT,
            ApiError::Validation { .. } => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::UnsupportedMedia => StatusCode::UNSUPPORTED_MEDIA_TYPE,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ApiError::NotFound(_) => "not_found",
            ApiError::Conflict { .. } => "revision_conflict",
            ApiError::Validation { .. } => "validation",
            ApiError::State(_) => "invalid_state",
            ApiError::Unauthorized => "unauthorized",
            ApiError::UnsupportedMedia => "unsupported_media_type",
            ApiError::Internal(_) => "internal",
        }
    }

    /// Prefixes the field path, e.g. `phi` inside a `design` object.
    pub fn within(self, prefix: &str) -> Self {
        match self {
            ApiError::Validation { field, message } => ApiError::Validation {
                field: Some(match field {
                    Some(f) if !f.is_empty() && f != "." => format!("{prefix}.{f}"),
                    _ => prefix.to_string(),
                }),
                message,
            },
            other => other,
        }
    }
}

impl From<dosecomb::Error> for ApiError {
    fn from(e: dosecomb::Error) -> Self {
        use dosecomb::Error as E;
        match e {
            E::Parameter { field, .. } => ApiError::Validation {
                field: Some(field.to_string()),
                message: e.to_string(),
            },
            E::Precondition(_) | E::Scenario(_) => ApiError::Validation {
                field: None,
                message: e.to_string(),
            },
            E::TrialNotOngoing(_) => ApiError::State(e.to_string()),
            E::Io(msg) => ApiError::Internal(msg),
        }
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    schema_version: u32,
    error: ErrorDetail<'a>,
}

#[derive(Serialize)]
struct ErrorDetail<'a> {
    kind: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    field: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    current_revision: Option<u64>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status();
        let (field, current_revision) = match &self {
            ApiError::Validation { field, .. } => (field.as_deref(), None),
            ApiError::Conflict { current, .. } => (None, Some(*current)),
            _ => (None, None),
        };
        let body = ErrorBody {
            schema_version: SCHEMA_VERSION,
            error: ErrorDetail {
                kind: self.kind(),
                message: self.to_string(),
                field,
                current_revision,
            },
        };
        (status, Json(body)).into_response()
    }
}
