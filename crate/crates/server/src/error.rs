//! JSON error envelope shared by every endpoint.

use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use passgate::flows::FlowError;
use passgate::password::PasswordError;
use passgate::tokens::TokenError;
use serde::{Deserialize, Serialize};

/// `{status, code, message}`. `code` is stable; `message` is for humans.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(skip)]
    pub retry_after: Option<u64>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.to_owned(),
            message: message.into(),
            retry_after: None,
        }
    }

    pub fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn unauthorized(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNAUTHORIZED, code, message)
    }

    pub fn not_found() -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", "not found")
    }

    pub fn internal() -> Self {
        Self::new(
            StatusCode::INTERNAL_SERVER_ERROR,
            "internal",
            "internal error",
        )
    }

    pub fn status_code(&self) -> StatusCode {
        StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = self.status_code();
        let retry_after = self.retry_after;
        let mut response = (status, Json(self)).into_response();
        if let Some(secs) = retry_after {
            response
                .headers_mut()
                .insert(header::RETRY_AFTER, HeaderValue::from(secs));
        }
        response
    }
}

fn token_error(e: &TokenError) -> ApiError {
    match e {
        TokenError::Expired => ApiError::unauthorized("token_expired", "token has expired"),
        TokenError::Revoked => ApiError::unauthorized("token_revoked", "Token has been revoked"),
        TokenError::BadSignature | TokenError::Malformed(_) => {
            ApiError::unauthorized("invalid_token", "token is not valid")
        }
        TokenError::ConfigError(_) => ApiError::internal(),
    }
}

impl From<FlowError> for ApiError {
    fn from(e: FlowError) -> Self {
        use StatusCode as S;
        let msg = e.to_string();
        match &e {
            FlowError::InvalidEmail => ApiError::bad_request("invalid_email", msg),
            FlowError::AlreadyRegistered => ApiError::bad_request("already_registered", msg),
            FlowError::RateLimited { retry_after } => {
                let secs = retry_after.num_seconds().max(1) as u64;
                ApiError {
                    retry_after: Some(secs),
                    ..ApiError::new(S::TOO_MANY_REQUESTS, "rate_limited", msg)
                }
            }
            FlowError::NoPendingRegistration => {
                ApiError::bad_request("no_pending_registration", msg)
            }
            FlowError::CodeMismatch => ApiError::bad_request("code_mismatch", msg),
            FlowError::CodeExpired => ApiError::bad_request("code_expired", msg),
            FlowError::NotVerified => ApiError::bad_request("not_verified", msg),
            FlowError::Password(PasswordError::PolicyViolation) => {
                ApiError::bad_request("password_policy", msg)
            }
            FlowError::Password(_) => ApiError::internal(),
            FlowError::InvalidCredentials => ApiError::unauthorized("invalid_credentials", msg),
            FlowError::StateMismatch => ApiError::bad_request("state_mismatch", msg),
            FlowError::CodeExchangeFailed(_) => {
                ApiError::unauthorized("code_exchange_failed", "OAuth code exchange failed")
            }
            FlowError::SessionNotFound => ApiError::new(S::NOT_FOUND, "session_not_found", msg),
            FlowError::Registration(w) => ApiError::bad_request(w.code(), msg),
            FlowError::Authentication(w) => ApiError::unauthorized(w.code(), msg),
            FlowError::NotFound => ApiError::not_found(),
            FlowError::Forbidden => ApiError::new(S::FORBIDDEN, "forbidden", msg),
            FlowError::Token(t) => token_error(t),
            FlowError::Mail(_) => {
                ApiError::new(S::BAD_GATEWAY, "mail_failed", "could not deliver email")
            }
            FlowError::Store(_) | FlowError::Config(_) => ApiError::internal(),
        }
    }
}
