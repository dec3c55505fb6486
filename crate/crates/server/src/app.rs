//! Route table, extractors and middleware.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::JsonRejection;
use axum::extract::{ConnectInfo, FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use passgate::b64;
use passgate::flows::{FlowError, Flows, MockProvider, PasskeySummary};
use passgate::storage::UserId;
use passgate::tokens::TokenClaims;
use passgate::webauthn::{AuthenticationResponse, RegistrationResponse};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{AllowOrigin, CorsLayer};

use crate::error::ApiError;

pub const SESSION_COOKIE: &str = "passgate_session";

#[derive(Debug, Clone)]
pub struct HttpSettings {
    /// The single origin allowed by CORS (the frontend).
    pub allowed_origin: String,
    /// Emit Strict-Transport-Security.
    pub hsts: bool,
    /// Mark the session cookie `Secure`.
    pub secure_cookies: bool,
}

impl HttpSettings {
    pub fn for_origin(origin: &str) -> Self {
        let https = origin.starts_with("https://");
        Self {
            allowed_origin: origin.to_owned(),
            hsts: false,
            secure_cookies: https,
        }
    }
}

pub struct AppState {
    pub flows: Arc<Flows>,
    /// Present when the built-in mock OAuth provider is active.
    pub mock_oauth: Option<Arc<MockProvider>>,
    pub settings: HttpSettings,
}

type Shared = Arc<AppState>;

pub fn router(state: Shared) -> Router {
    let allowed = state.settings.allowed_origin.clone();
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(move |origin: &HeaderValue, _| {
            origin.as_bytes() == allowed.as_bytes()
        }))
        .allow_methods([Method::GET, Method::POST, Method::DELETE])
        .allow_headers([header::CONTENT_TYPE, header::AUTHORIZATION])
        .expose_headers([header::RETRY_AFTER])
        .allow_credentials(true);

    let mut routes = Router::new()
        .route("/health", get(health))
        .route("/auth/register/code", post(register_code))
        .route("/auth/register/verify", post(register_verify))
        .route("/auth/register/password", post(register_password))
        .route("/auth/login", post(login))
        .route("/auth/login/verify", post(login_verify))
        .route("/auth/oauth/google", get(oauth_start))
        .route("/auth/oauth/callback", get(oauth_callback))
        .route(
            "/auth/passkey/register-options",
            post(passkey_register_options),
        )
        .route(
            "/auth/passkey/register-verify",
            post(passkey_register_verify),
        )
        .route("/auth/passkey/auth-options", post(passkey_auth_options))
        .route("/auth/passkey/auth-verify", post(passkey_auth_verify))
        .route("/auth/passkey/list", get(passkey_list))
        .route("/auth/passkey/{id}", delete(passkey_delete))
        .route("/auth/logout", post(logout))
        .route("/me", get(me));
    if state.mock_oauth.is_some() {
        routes = routes.route("/oauth/mock/authorize", get(mock_authorize));
    }
    routes
        .fallback(|| async { ApiError::not_found() })
        .method_not_allowed_fallback(|| async {
            ApiError::new(
                StatusCode::METHOD_NOT_ALLOWED,
                "method_not_allowed",
                "method not allowed",
            )
        })
        .layer(cors)
        .layer(middleware::from_fn_with_state(
            state.clone(),
            security_headers,
        ))
        .with_state(state)
}

const CSP: &str = "default-src 'none'; frame-ancestors 'none'; base-uri 'none'; form-action 'none'";

async fn security_headers(State(state): State<Shared>, request: Request, next: Next) -> Response {
    let mut response = next.run(request).await;
    let headers = response.headers_mut();
    headers.insert(
        header::X_CONTENT_TYPE_OPTIONS,
        HeaderValue::from_static("nosniff"),
    );
    headers.insert(header::X_FRAME_OPTIONS, HeaderValue::from_static("DENY"));
    headers.insert(
        header::REFERRER_POLICY,
        HeaderValue::from_static("no-referrer"),
    );
    headers.insert(
        header::CONTENT_SECURITY_POLICY,
        HeaderValue::from_static(CSP),
    );
    headers.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    if state.settings.hsts {
        headers.insert(
            header::STRICT_TRANSPORT_SECURITY,
            HeaderValue::from_static("max-age=63072000; includeSubDomains"),
        );
    }
    response
}

// ---- extractors ----

/// JSON body whose rejections use the error envelope.
pub struct ApiJson<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for ApiJson<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(ApiJson(v)),
            Err(rejection) => Err(json_rejection(rejection)),
        }
    }
}

fn json_rejection(rejection: JsonRejection) -> ApiError {
    let status = rejection.status();
    let code = match rejection {
        JsonRejection::MissingJsonContentType(_) => "unsupported_media_type",
        JsonRejection::JsonSyntaxError(_) => "malformed_json",
        JsonRejection::JsonDataError(_) => "invalid_request",
        _ => "invalid_request",
    };
    ApiError::new(status, code, "request body is not valid")
}

/// Rate-limit key: the peer IP, or `local` when no socket address is known.
pub struct ClientKey(pub String);

impl<S: Send + Sync> FromRequestParts<S> for ClientKey {
    type Rejection = std::convert::Infallible;

    async fn from_request_parts(parts: &mut Parts, _: &S) -> Result<Self, Self::Rejection> {
        let key = parts
            .extensions
            .get::<ConnectInfo<SocketAddr>>()
            .map(|ci| ci.0.ip().to_string())
            .unwrap_or_else(|| "local".to_owned());
        Ok(ClientKey(key))
    }
}

/// A verified Bearer token.
pub struct Authed {
    pub claims: TokenClaims,
    pub token: String,
}

impl FromRequestParts<Shared> for Authed {
    type Rejection = ApiError;

    async fn from_request_parts(
        parts: &mut Parts,
        state: &Shared,
    ) -> Result<Self, Self::Rejection> {
        let token = parts
            .headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .ok_or_else(|| ApiError::unauthorized("missing_token", "Bearer token required"))?
            .to_owned();
        let claims = state.flows.authenticate(&token)?;
        Ok(Authed { claims, token })
    }
}

/// Runs a flow call on the blocking pool (bcrypt and ECDSA are CPU-bound).
async fn blocking<T: Send + 'static>(
    state: &Shared,
    f: impl FnOnce(&Flows) -> Result<T, FlowError> + Send + 'static,
) -> Result<T, ApiError> {
    let flows = state.flows.clone();
    tokio::task::spawn_blocking(move || f(&flows))
        .await
        .map_err(|_| ApiError::internal())?
        .map_err(ApiError::from)
}

fn cookie(settings: &HttpSettings, session_id: &str, max_age: i64) -> HeaderValue {
    let secure = if settings.secure_cookies {
        "; Secure"
    } else {
        ""
    };
    HeaderValue::from_str(&format!(
        "{SESSION_COOKIE}={session_id}; Path=/auth/passkey; Max-Age={max_age}; HttpOnly; SameSite=Strict{secure}"
    ))
    .expect("session ids are base64url")
}

fn session_cookie(settings: &HttpSettings, session_id: &str) -> HeaderValue {
    cookie(settings, session_id, 300)
}

fn clear_cookie(settings: &HttpSettings) -> HeaderValue {
    cookie(settings, "", 0)
}

/// The body's session id is authoritative; a cookie, when sent, must agree.
fn check_session_cookie(headers: &HeaderMap, session_id: &str) -> Result<(), ApiError> {
    let cookie = headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|pair| pair.trim().split_once('='))
        .find(|(name, _)| *name == SESSION_COOKIE)
        .map(|(_, value)| value);
    match cookie {
        Some(value) if !value.is_empty() && value != session_id => Err(ApiError::bad_request(
            "session_mismatch",
            "session cookie does not match sessionId",
        )),
        _ => Ok(()),
    }
}

// ---- bodies ----

#[derive(Deserialize)]
struct EmailBody {
    email: String,
}

#[derive(Deserialize)]
struct EmailCodeBody {
    email: String,
    code: String,
}

#[derive(Deserialize)]
struct EmailPasswordBody {
    email: String,
    password: String,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct RegisterVerifyBody {
    session_id: String,
    response: RegistrationResponse,
    #[serde(default)]
    device_name: String,
}

#[derive(Deserialize, Default)]
struct AuthOptionsBody {
    email: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct AuthVerifyBody {
    session_id: String,
    response: AuthenticationResponse,
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TokenResponse {
    pub token: String,
    pub token_type: &'static str,
    pub expires_in: i64,
}

fn token_response(state: &Shared, token: passgate::tokens::SignedToken) -> Json<TokenResponse> {
    Json(TokenResponse {
        token: token.0,
        token_type: "Bearer",
        expires_in: state.flows.tokens().lifetime().num_seconds(),
    })
}

// ---- handlers ----

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn register_code(
    State(state): State<Shared>,
    ApiJson(body): ApiJson<EmailBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    blocking(&state, move |f| f.request_registration_code(&body.email)).await?;
    Ok(Json(json!({ "status": "code_sent" })))
}

async fn register_verify(
    State(state): State<Shared>,
    ApiJson(body): ApiJson<EmailCodeBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    blocking(&state, move |f| {
        f.verify_registration_code(&body.email, &body.code)
    })
    .await?;
    Ok(Json(json!({ "status": "verified" })))
}

async fn register_password(
    State(state): State<Shared>,
    ApiJson(body): ApiJson<EmailPasswordBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let id = blocking(&state, move |f| {
        f.set_password_and_promote(&body.email, &body.password)
    })
    .await?;
    Ok(Json(json!({ "status": "registered", "userId": id })))
}

async fn login(
    State(state): State<Shared>,
    ClientKey(client): ClientKey,
    ApiJson(body): ApiJson<EmailPasswordBody>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let pending = blocking(&state, move |f| {
        f.login_password_step(&body.email, &body.password, &client)
    })
    .await?;
    Ok(Json(json!({
        "status": "code_sent",
        "expiresIn": pending.expires_in.num_seconds(),
    })))
}

async fn login_verify(
    State(state): State<Shared>,
    ApiJson(body): ApiJson<EmailCodeBody>,
) -> Result<Json<TokenResponse>, ApiError> {
    let token = blocking(&state, move |f| f.login_code_step(&body.email, &body.code))
        .await
        .map_err(|mut e| {
            // a failed second factor is an authentication failure
            if e.status == 400 {
                e.status = 401;
            }
            e
        })?;
    Ok(token_response(&state, token))
}

fn redirect(location: &str) -> Response {
    match HeaderValue::from_str(location) {
        Ok(value) => (StatusCode::FOUND, [(header::LOCATION, value)]).into_response(),
        Err(_) => ApiError::internal().into_response(),
    }
}

async fn oauth_start(State(state): State<Shared>) -> Response {
    redirect(&state.flows.oauth_start().authorize_url)
}

async fn oauth_callback(
    State(state): State<Shared>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Json<TokenResponse>, ApiError> {
    if let Some(err) = params.get("error") {
        return Err(ApiError::unauthorized(
            "oauth_denied",
            format!("provider returned {err}"),
        ));
    }
    let code = params.get("code").cloned().unwrap_or_default();
    let oauth_state = params.get("state").cloned().unwrap_or_default();
    let token = blocking(&state, move |f| f.oauth_callback(&code, &oauth_state)).await?;
    Ok(token_response(&state, token))
}

/// Consent screen stand-in: approves immediately for `login_hint`.
async fn mock_authorize(
    State(state): State<Shared>,
    Query(params): Query<HashMap<String, String>>,
) -> Result<Response, ApiError> {
    let mock = state.mock_oauth.as_ref().ok_or_else(ApiError::not_found)?;
    if params.get("redirect_uri").map(String::as_str) != Some(mock.redirect_uri()) {
        return Err(ApiError::bad_request(
            "invalid_redirect_uri",
            "redirect_uri is not registered",
        ));
    }
    let oauth_state = params
        .get("state")
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ApiError::bad_request("invalid_request", "state is required"))?;
    let email = params
        .get("login_hint")
        .filter(|s| passgate::storage::is_plausible_email(&passgate::storage::normalize_email(s)))
        .ok_or_else(|| ApiError::bad_request("invalid_request", "login_hint must be an email"))?;
    Ok(redirect(&mock.authorize(oauth_state, email)))
}

async fn passkey_register_options(
    State(state): State<Shared>,
    auth: Authed,
) -> Result<Response, ApiError> {
    let user = auth.claims.subject;
    let (session_id, options) =
        blocking(&state, move |f| f.passkey_register_options(&user)).await?;
    let cookie = session_cookie(&state.settings, &session_id);
    Ok((
        [(header::SET_COOKIE, cookie)],
        Json(json!({ "sessionId": session_id, "options": options })),
    )
        .into_response())
}

async fn passkey_register_verify(
    State(state): State<Shared>,
    auth: Authed,
    ClientKey(client): ClientKey,
    headers: HeaderMap,
    ApiJson(body): ApiJson<RegisterVerifyBody>,
) -> Result<Response, ApiError> {
    check_session_cookie(&headers, &body.session_id)?;
    let user = auth.claims.subject;
    let record = blocking(&state, move |f| {
        f.passkey_register_verify(
            &user,
            &body.session_id,
            &body.response,
            &body.device_name,
            &client,
        )
    })
    .await?;
    Ok((
        [(header::SET_COOKIE, clear_cookie(&state.settings))],
        Json(json!({ "status": "registered", "passkey": PasskeySummary::from(&record) })),
    )
        .into_response())
}

async fn passkey_auth_options(
    State(state): State<Shared>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let body: AuthOptionsBody = if body.iter().all(u8::is_ascii_whitespace) {
        AuthOptionsBody::default()
    } else {
        serde_json::from_slice(&body)
            .map_err(|_| ApiError::bad_request("malformed_json", "request body is not valid"))?
    };
    let (session_id, options) = blocking(&state, move |f| {
        f.passkey_auth_options(body.email.as_deref())
    })
    .await?;
    let cookie = session_cookie(&state.settings, &session_id);
    Ok((
        [(header::SET_COOKIE, cookie)],
        Json(json!({ "sessionId": session_id, "options": options })),
    )
        .into_response())
}

async fn passkey_auth_verify(
    State(state): State<Shared>,
    ClientKey(client): ClientKey,
    headers: HeaderMap,
    ApiJson(body): ApiJson<AuthVerifyBody>,
) -> Result<Response, ApiError> {
    check_session_cookie(&headers, &body.session_id)?;
    let token = blocking(&state, move |f| {
        f.passkey_auth_verify(&body.session_id, &body.response, &client)
    })
    .await?;
    Ok((
        [(header::SET_COOKIE, clear_cookie(&state.settings))],
        token_response(&state, token),
    )
        .into_response())
}

async fn passkey_list(State(state): State<Shared>, auth: Authed) -> Json<serde_json::Value> {
    let passkeys = state.flows.list_passkeys(&auth.claims.subject);
    Json(json!({ "passkeys": passkeys }))
}

async fn passkey_delete(
    State(state): State<Shared>,
    auth: Authed,
    Path(id): Path<String>,
) -> Result<StatusCode, ApiError> {
    let raw = b64::decode(&id).map_err(|_| ApiError::not_found())?;
    let user: UserId = auth.claims.subject;
    blocking(&state, move |f| f.delete_passkey(&user, &raw)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn logout(
    State(state): State<Shared>,
    auth: Authed,
) -> Result<Json<serde_json::Value>, ApiError> {
    state.flows.logout(&auth.token)?;
    Ok(Json(json!({ "status": "revoked" })))
}

async fn me(auth: Authed) -> Json<TokenClaims> {
    Json(auth.claims)
}
