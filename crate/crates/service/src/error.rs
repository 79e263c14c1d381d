use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

/// JSON error envelope returned by every endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub message: String,
    pub field_errors: Vec<FieldError>,
}

#[derive(Debug, Clone)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                code,
                message: message.into(),
                field_errors: Vec::new(),
            },
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn invalid_params(fields: Vec<(String, String)>) -> Self {
        let mut e = Self::new(
            StatusCode::BAD_REQUEST,
            "invalid_params",
            format!("{} invalid field(s)", fields.len()),
        );
        e.body.field_errors = fields
            .into_iter()
            .map(|(field, message)| FieldError { field, message })
            .collect();
        e
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl From<rptte_core::Error> for ApiError {
    fn from(e: rptte_core::Error) -> Self {
        use rptte_core::Error as E;
        match e {
            E::UnknownEntity(_) | E::NoPath { .. } => ApiError::not_found(e.to_string()),
            E::InvalidParam { field, message } => {
                ApiError::invalid_params(vec![(field.to_string(), message)])
            }
            E::DateOutOfRange { .. } => ApiError::bad_request(e.to_string()),
            other => ApiError::internal(other.to_string()),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        crate::api::json_response(self.status, &self.body)
    }
}
