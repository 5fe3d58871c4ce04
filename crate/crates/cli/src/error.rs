use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::{Deserialize, Serialize};
use uibench_core::run::RunError;

/// Error body returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ApiError {
    #[serde(skip)]
    pub http_status: u16,
    pub code: String,
    pub message: String,
}

/// Every code the service emits, with its HTTP status and CLI exit code.
pub const ERROR_CODES: &[(&str, u16, i32)] = &[
    ("ConfigError", 400, 3),
    ("RunNotFound", 404, 4),
    ("RunAlreadyActive", 409, 5),
    ("RunNotTerminal", 409, 6),
    ("DatasetNotFound", 404, 7),
    ("DatasetError", 400, 7),
    ("UnreadableImage", 400, 7),
    ("InvalidArtifactName", 400, 3),
    ("InstanceNotFound", 404, 4),
    ("ArtifactNotFound", 404, 4),
    ("EnvironmentError", 503, 8),
    ("InternalError", 500, 1),
];

impl ApiError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        let http_status = ERROR_CODES
            .iter()
            .find(|(c, _, _)| *c == code)
            .map_or(500, |(_, s, _)| *s);
        let code = if http_status == 500 { "InternalError" } else { code };
        Self {
            http_status,
            code: code.to_string(),
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        ERROR_CODES
            .iter()
            .find(|(c, _, _)| *c == self.code)
            .map_or(1, |(_, _, e)| *e)
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        let code = match &e {
            RunError::Dataset(d) if d.code() == "UnreadableImage" => "UnreadableImage",
            other => other.code(),
        };
        ApiError::new(code, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}
