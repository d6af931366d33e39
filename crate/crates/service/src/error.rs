use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use milrw_core::analytics::AnalyticsError;
use milrw_core::corpus::CorpusError;
use milrw_core::feedback::FeedbackError;
use milrw_core::generation::GenerationError;
use milrw_core::session::SessionError;
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Feedback(#[from] FeedbackError),
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no base corpus is configured for mixing")]
    NoBaseCorpus,
    #[error("admin token missing or wrong")]
    Unauthorized,
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        use SessionError as S;
        match self {
            ServiceError::Session(e) => match e {
                S::UnknownSession(_) | S::UnknownRequest(_) => StatusCode::NOT_FOUND,
                S::AlreadyDecided(_)
                | S::NotActive(_)
                | S::NotSubmitted
                | S::SurveyAlreadySubmitted
                | S::PoolExhausted
                | S::DuplicateSession(_) => StatusCode::CONFLICT,
                S::BadIndex { .. } | S::Markup(_) => StatusCode::BAD_REQUEST,
                S::TooShort { .. } | S::TooFewRequests { .. } | S::InvalidSurvey(_) => StatusCode::UNPROCESSABLE_ENTITY,
                S::Generation(GenerationError::InvalidInput(_)) => StatusCode::BAD_REQUEST,
                S::Generation(GenerationError::InvalidConfig(_)) => StatusCode::INTERNAL_SERVER_ERROR,
                S::Generation(_) => StatusCode::BAD_GATEWAY,
                S::EmptyPool | S::InvalidEvent(_) | S::CorruptLog { .. } | S::Store(_) => {
                    StatusCode::INTERNAL_SERVER_ERROR
                }
            },
            ServiceError::Feedback(FeedbackError::InsufficientBase { .. } | FeedbackError::InvalidRatio(_))
            | ServiceError::NoBaseCorpus
            | ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Session(e) => e.code(),
            ServiceError::Feedback(FeedbackError::InsufficientBase { .. }) => "INSUFFICIENT_BASE",
            ServiceError::Feedback(FeedbackError::InvalidRatio(_)) => "INVALID_RATIO",
            ServiceError::Feedback(_) => "FEEDBACK_ERROR",
            ServiceError::Analytics(_) => "ANALYTICS_ERROR",
            ServiceError::Corpus(_) => "CORPUS_ERROR",
            ServiceError::NoBaseCorpus => "NO_BASE_CORPUS",
            ServiceError::Unauthorized => "UNAUTHORIZED",
            ServiceError::BadRequest(_) => "BAD_REQUEST",
            ServiceError::Internal(_) => "INTERNAL",
        }
    }

    /// Client-facing message. Backend and storage details stay in the server
    /// log, since they can name the arm a session runs on.
    fn public_message(&self) -> String {
        match self {
            ServiceError::Session(SessionError::Generation(GenerationError::InvalidInput(e))) => e.to_string(),
            ServiceError::Session(SessionError::Generation(_)) => "the suggestion backend failed".into(),
            ServiceError::Session(SessionError::Store(_) | SessionError::InvalidEvent(_) | SessionError::CorruptLog { .. })
            | ServiceError::Internal(_) => "internal error".into(),
            other => other.to_string(),
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            tracing::error!(code = self.code(), "{self}");
        }
        let mut body = json!({ "error": { "code": self.code(), "message": self.public_message() } });
        if let ServiceError::Session(
            SessionError::TooShort { actual, required } | SessionError::TooFewRequests { actual, required },
        ) = &self
        {
            body["error"]["actual"] = json!(actual);
            body["error"]["required"] = json!(required);
        }
        (status, Json(body)).into_response()
    }
}
