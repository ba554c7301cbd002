use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use topiclens_core::embedding::EmbeddingError;
use topiclens_core::pipeline::FitError;
use topiclens_core::topicstore::TopicStoreError;

use crate::persist::PersistError;

/// An HTTP error with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn conflict() -> Self {
        Self::new(
            StatusCode::CONFLICT,
            "Conflict",
            "another modification is in progress",
        )
    }

    pub fn no_model() -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "NoModel",
            "no topic model has been fitted or loaded",
        )
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

fn embedding(e: &EmbeddingError) -> ApiError {
    match e {
        EmbeddingError::ProviderUnavailable(_)
        | EmbeddingError::MalformedResponse(_)
        | EmbeddingError::NonFinite
        | EmbeddingError::Cache(_) => ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "ProviderUnavailable",
            e.to_string(),
        ),
        _ => ApiError::bad_request("Embedding", e.to_string()),
    }
}

impl From<TopicStoreError> for ApiError {
    fn from(e: TopicStoreError) -> Self {
        let msg = e.to_string();
        match &e {
            TopicStoreError::InvalidTopicIndex { .. } => {
                ApiError::new(StatusCode::NOT_FOUND, "InvalidTopicIndex", msg)
            }
            TopicStoreError::NeedAtLeastTwo => ApiError::bad_request("NeedAtLeastTwo", msg),
            TopicStoreError::LastTopic => ApiError::bad_request("LastTopic", msg),
            TopicStoreError::TooFewDocuments { .. } => {
                ApiError::bad_request("TooFewDocuments", msg)
            }
            TopicStoreError::EmptyKeyword => ApiError::bad_request("EmptyKeyword", msg),
            TopicStoreError::InvalidParameter(_) => ApiError::bad_request("InvalidParameter", msg),
            TopicStoreError::InvalidAssignment(_) => {
                ApiError::bad_request("InvalidAssignment", msg)
            }
            TopicStoreError::Clustering(_) => ApiError::bad_request("Clustering", msg),
            TopicStoreError::Embedding(inner) => embedding(inner),
            TopicStoreError::Inconsistent(_) | TopicStoreError::Topwords(_) => {
                ApiError::internal(msg)
            }
        }
    }
}

impl From<FitError> for ApiError {
    fn from(e: FitError) -> Self {
        match &e {
            FitError::Embedding(inner) => embedding(inner),
            FitError::Topics(inner) => inner.clone().into(),
            _ => ApiError::bad_request("FitFailed", e.to_string()),
        }
    }
}

impl From<PersistError> for ApiError {
    fn from(e: PersistError) -> Self {
        ApiError::internal(e.to_string())
    }
}
