//! Login and registration flows over storage, hashing, codes, tokens and
//! the WebAuthn relying party:
//!
//! 1. email registration: code request → code verification → password
//! 2. password + emailed code login
//! 3. OAuth2 authorization-code login (find-or-create user)
//! 4. passkey registration for a signed-in user
//! 5. passkey login
//!
//! All shared state lives in [`Store`]; `Flows` itself is a stateless
//! coordinator apart from the rate limiter.

mod mailer;
mod oauth;
mod passkey;
mod rate_limit;

use std::sync::Arc;

use chrono::Duration;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use mailer::{CaptureMailer, MailError, Mailer, OutgoingMail};
pub use oauth::{MockProvider, OAuthError, OAuthIdentity, OAuthProvider, MOCK_CODE_TTL};
pub use passkey::PasskeySummary;
pub use rate_limit::{RateDecision, RateLimit, RateLimiter};

use crate::b64;
use crate::otp::{self, OtpCode, OtpSecret};
use crate::password::{self, PasswordError, PasswordHash};
use crate::storage::{
    is_plausible_email, normalize_email, Store, StoreError, TtlUpdate, UserId, UserRecord,
};
use crate::tokens::{SignedToken, TokenClaims, TokenError, TokenService, DEFAULT_TOKEN_TTL};
use crate::webauthn::{RelyingParty, WebAuthnError};

pub const ROUTE_REGISTER_CODE: &str = "register_code";
pub const ROUTE_LOGIN: &str = "login";
pub const ROUTE_PASSKEY_VERIFY: &str = "passkey_verify";

pub const ISSUER: &str = "PassGate";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowConfig {
    pub registration_code_ttl: Duration,
    pub login_code_ttl: Duration,
    pub code_digits: u32,
    /// Wrong submissions after which a code is invalidated.
    pub max_code_attempts: u32,
    pub bcrypt_cost: u32,
    pub token_ttl: Duration,
    pub oauth_state_ttl: Duration,
    pub totp_window: u32,
    pub code_request_limit: RateLimit,
    pub login_limit: RateLimit,
    pub passkey_verify_limit: RateLimit,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            registration_code_ttl: Duration::seconds(30),
            login_code_ttl: Duration::seconds(300),
            code_digits: 6,
            max_code_attempts: 3,
            bcrypt_cost: password::DEFAULT_COST,
            token_ttl: DEFAULT_TOKEN_TTL,
            oauth_state_ttl: Duration::seconds(600),
            totp_window: otp::DEFAULT_WINDOW,
            code_request_limit: RateLimit::per_minute(3),
            login_limit: RateLimit::per_minute(10),
            passkey_verify_limit: RateLimit::per_minute(20),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error("email address is not valid")]
    InvalidEmail,
    #[error("email is already registered")]
    AlreadyRegistered,
    #[error("too many requests; retry in {}s", retry_after.num_seconds())]
    RateLimited { retry_after: Duration },
    #[error("no registration is pending for this email")]
    NoPendingRegistration,
    #[error("verification code does not match")]
    CodeMismatch,
    #[error("verification code expired or already used")]
    CodeExpired,
    #[error("email has not been verified")]
    NotVerified,
    #[error(transparent)]
    Password(#[from] PasswordError),
    #[error("invalid email or password")]
    InvalidCredentials,
    #[error("OAuth state does not match an issued state")]
    StateMismatch,
    #[error("OAuth code exchange failed: {0}")]
    CodeExchangeFailed(String),
    #[error("ceremony session not found")]
    SessionNotFound,
    #[error("passkey registration failed: {0}")]
    Registration(WebAuthnError),
    #[error("passkey authentication failed: {0}")]
    Authentication(WebAuthnError),
    #[error("not found")]
    NotFound,
    #[error("not allowed")]
    Forbidden,
    #[error(transparent)]
    Token(#[from] TokenError),
    #[error(transparent)]
    Mail(#[from] MailError),
    #[error("storage failure: {0}")]
    Store(StoreError),
    #[error("configuration error: {0}")]
    Config(String),
}

impl From<StoreError> for FlowError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::UniquenessViolation { field: "email" } => FlowError::AlreadyRegistered,
            StoreError::NotVerified => FlowError::NotVerified,
            other => FlowError::Store(other),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CodeEntry {
    code: String,
    attempts: u32,
}

/// Returned by the password step of a login; the code itself goes by mail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingLogin {
    pub email: String,
    pub expires_in: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OAuthStart {
    pub authorize_url: String,
    pub state: String,
}

pub struct Flows {
    store: Arc<Store>,
    tokens: TokenService,
    rp: RelyingParty,
    mailer: Arc<dyn Mailer>,
    oauth: Arc<dyn OAuthProvider>,
    limiter: RateLimiter,
    config: FlowConfig,
    dummy_hash: PasswordHash,
}

impl std::fmt::Debug for Flows {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Flows")
            .field("rp", &self.rp)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

fn code_key(kind: &str, email: &str) -> String {
    format!("{kind}:{email}")
}

impl Flows {
    pub fn new(
        store: Arc<Store>,
        rp: RelyingParty,
        jwt_secret: impl Into<Vec<u8>>,
        mailer: Arc<dyn Mailer>,
        oauth: Arc<dyn OAuthProvider>,
        config: FlowConfig,
    ) -> Result<Self, FlowError> {
        let tokens = TokenService::new(jwt_secret, config.token_ttl, store.clone())?;
        if !(4..=8).contains(&config.code_digits) {
            return Err(FlowError::Config("code_digits must be in 4..=8".into()));
        }
        if config.max_code_attempts == 0 {
            return Err(FlowError::Config(
                "max_code_attempts must be positive".into(),
            ));
        }
        if config.registration_code_ttl <= Duration::zero()
            || config.login_code_ttl <= Duration::zero()
        {
            return Err(FlowError::Config("code TTLs must be positive".into()));
        }
        // verified against when the account does not exist, so failures cost the same
        let dummy_hash = password::hash_password("passgate-timing-equalizer", config.bcrypt_cost)?;
        let limiter = RateLimiter::new(store.clock().clone())
            .with_limit(ROUTE_REGISTER_CODE, config.code_request_limit)
            .with_limit(ROUTE_LOGIN, config.login_limit)
            .with_limit(ROUTE_PASSKEY_VERIFY, config.passkey_verify_limit);
        Ok(Self {
            store,
            tokens,
            rp,
            mailer,
            oauth,
            limiter,
            config,
            dummy_hash,
        })
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn tokens(&self) -> &TokenService {
        &self.tokens
    }

    pub fn relying_party(&self) -> &RelyingParty {
        &self.rp
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn limiter(&self) -> &RateLimiter {
        &self.limiter
    }

    pub fn oauth_provider(&self) -> &Arc<dyn OAuthProvider> {
        &self.oauth
    }

    pub fn check_rate(&self, route: &str, client_key: &str) -> Result<(), FlowError> {
        match self.limiter.check_rate(route, client_key) {
            RateDecision::Allow { .. } => Ok(()),
            RateDecision::Deny { retry_after } => Err(FlowError::RateLimited { retry_after }),
        }
    }

    fn valid_email(email: &str) -> Result<String, FlowError> {
        let email = normalize_email(email);
        if is_plausible_email(&email) {
            Ok(email)
        } else {
            Err(FlowError::InvalidEmail)
        }
    }

    fn issue_code(&self, key: &str, ttl: Duration) -> OtpCode {
        let code = otp::generate_numeric_code(self.config.code_digits);
        let entry = CodeEntry {
            code: code.as_str().to_owned(),
            attempts: 0,
        };
        self.store.ttl_put(
            key,
            serde_json::to_vec(&entry).expect("code entry serializes"),
            ttl,
        );
        code
    }

    /// Atomically checks a submitted code. A match deletes it; a miss counts
    /// an attempt and deletes it once `max_code_attempts` misses accumulate.
    fn consume_code(&self, key: &str, submitted: &str) -> Result<(), FlowError> {
        let max = self.config.max_code_attempts;
        let mut outcome = Err(FlowError::CodeExpired);
        self.store.ttl_update(key, &mut |raw| {
            let Ok(mut entry) = serde_json::from_slice::<CodeEntry>(raw) else {
                outcome = Err(FlowError::CodeExpired);
                return TtlUpdate::Remove;
            };
            if OtpCode::new(entry.code.clone()).ct_matches(submitted) {
                outcome = Ok(());
                return TtlUpdate::Remove;
            }
            outcome = Err(FlowError::CodeMismatch);
            entry.attempts += 1;
            if entry.attempts >= max {
                TtlUpdate::Remove
            } else {
                TtlUpdate::Replace(serde_json::to_vec(&entry).expect("code entry serializes"))
            }
        });
        outcome
    }

    // ---- 1. registration with an emailed code ----

    pub fn request_registration_code(&self, email: &str) -> Result<(), FlowError> {
        let email = Self::valid_email(email)?;
        self.check_rate(ROUTE_REGISTER_CODE, &email)?;
        if self.store.find_user_by_email(&email).is_some() {
            return Err(FlowError::AlreadyRegistered);
        }
        self.store.stage_registration(&email)?;
        let ttl = self.config.registration_code_ttl;
        let code = self.issue_code(&code_key("register", &email), ttl);
        self.mailer.send(&OutgoingMail {
            to: email,
            subject: format!("{ISSUER} registration code"),
            body: format!(
                "Your {ISSUER} verification code is {code}. It expires in {} seconds.",
                ttl.num_seconds()
            ),
        })?;
        Ok(())
    }

    pub fn verify_registration_code(&self, email: &str, code: &str) -> Result<(), FlowError> {
        let email = Self::valid_email(email)?;
        if self.store.temp_registration(&email).is_none() {
            return Err(FlowError::NoPendingRegistration);
        }
        self.consume_code(&code_key("register", &email), code.trim())?;
        self.store.mark_registration_verified(&email)?;
        Ok(())
    }

    pub fn set_password_and_promote(&self, email: &str, plain: &str) -> Result<UserId, FlowError> {
        let email = Self::valid_email(email)?;
        let row = self
            .store
            .temp_registration(&email)
            .ok_or(FlowError::NoPendingRegistration)?;
        if !row.otp_verified {
            return Err(FlowError::NotVerified);
        }
        let hash = password::hash_password(plain, self.config.bcrypt_cost)?;
        let mut user = UserRecord::new(&email, self.store.now());
        user.password_hash = Some(hash);
        Ok(self.store.promote_registration(user)?)
    }

    // ---- 2. password + emailed code login ----

    pub fn login_password_step(
        &self,
        email: &str,
        plain: &str,
        client_key: &str,
    ) -> Result<PendingLogin, FlowError> {
        self.check_rate(ROUTE_LOGIN, client_key)?;
        let email = normalize_email(email);
        let user = self.store.find_user_by_email(&email);
        let stored = user
            .as_ref()
            .and_then(|u| u.password_hash.as_ref())
            .unwrap_or(&self.dummy_hash);
        let matches = password::verify_password(plain, stored);
        if !(matches && user.as_ref().is_some_and(|u| u.password_hash.is_some())) {
            return Err(FlowError::InvalidCredentials);
        }
        let ttl = self.config.login_code_ttl;
        let code = self.issue_code(&code_key("login", &email), ttl);
        self.mailer.send(&OutgoingMail {
            to: email.clone(),
            subject: format!("{ISSUER} sign-in code"),
            body: format!(
                "Your {ISSUER} sign-in code is {code}. It expires in {} seconds.",
                ttl.num_seconds()
            ),
        })?;
        Ok(PendingLogin {
            email,
            expires_in: ttl,
        })
    }

    pub fn login_code_step(&self, email: &str, code: &str) -> Result<SignedToken, FlowError> {
        let email = normalize_email(email);
        self.consume_code(&code_key("login", &email), code.trim())?;
        let user = self
            .store
            .find_user_by_email(&email)
            .ok_or(FlowError::InvalidCredentials)?;
        Ok(self.tokens.issue(user.user_id, &user.email))
    }

    // ---- 3. OAuth2 authorization code ----

    pub fn oauth_start(&self) -> OAuthStart {
        let mut raw = [0u8; 16];
        rand::rngs::OsRng.fill_bytes(&mut raw);
        let state = b64::encode(raw);
        self.store.ttl_put(
            &format!("oauth_state:{state}"),
            Vec::new(),
            self.config.oauth_state_ttl,
        );
        OAuthStart {
            authorize_url: self.oauth.authorize_url(&state),
            state,
        }
    }

    pub fn oauth_callback(&self, code: &str, state: &str) -> Result<SignedToken, FlowError> {
        if state.is_empty()
            || self
                .store
                .ttl_take(&format!("oauth_state:{state}"))
                .is_none()
        {
            return Err(FlowError::StateMismatch);
        }
        let identity = self
            .oauth
            .exchange_code(code)
            .map_err(|e| FlowError::CodeExchangeFailed(e.to_string()))?;
        let user = self.find_or_create_oauth_user(&identity)?;
        Ok(self.tokens.issue(user.user_id, &user.email))
    }

    fn find_or_create_oauth_user(&self, identity: &OAuthIdentity) -> Result<UserRecord, FlowError> {
        if let Some(user) = self.store.find_user_by_oauth_subject(&identity.subject) {
            return Ok(user);
        }
        let email = Self::valid_email(&identity.email)?;
        let user = match self.store.find_user_by_email(&email) {
            Some(mut existing) if existing.oauth_subject.is_none() => {
                existing.oauth_subject = Some(identity.subject.clone());
                existing
            }
            Some(_) => return Err(FlowError::AlreadyRegistered),
            None => {
                let mut fresh = UserRecord::new(&email, self.store.now());
                fresh.oauth_subject = Some(identity.subject.clone());
                fresh
            }
        };
        self.store.upsert_user(user.clone())?;
        Ok(user)
    }

    // ---- tokens ----

    /// Validates a bearer token and that its subject still exists.
    pub fn authenticate(&self, token: &str) -> Result<TokenClaims, FlowError> {
        let claims = self.tokens.verify(token)?;
        if self.store.find_user(&claims.subject).is_none() {
            return Err(FlowError::Token(TokenError::BadSignature));
        }
        Ok(claims)
    }

    pub fn logout(&self, token: &str) -> Result<(), FlowError> {
        Ok(self.tokens.revoke(token)?)
    }

    // ---- TOTP second factor ----

    /// Generates and stores a TOTP secret for `user_id`, returning the enrollment URI.
    pub fn enroll_totp(&self, user_id: &UserId) -> Result<(OtpSecret, String), FlowError> {
        let mut user = self.store.find_user(user_id).ok_or(FlowError::NotFound)?;
        let secret = otp::generate_secret(otp::DEFAULT_SECRET_BYTES)
            .map_err(|e| FlowError::Config(e.to_string()))?;
        let uri = otp::provisioning_uri(&secret, &user.email, ISSUER);
        user.totp_secret = Some(secret.to_base32());
        self.store.upsert_user(user)?;
        Ok((secret, uri))
    }

    /// Checks a TOTP code for `user_id`; each (user, time step) is accepted once.
    pub fn verify_user_totp(&self, user_id: &UserId, code: &str) -> Result<(), FlowError> {
        let user = self.store.find_user(user_id).ok_or(FlowError::NotFound)?;
        let secret = user
            .totp_secret
            .as_deref()
            .and_then(|s| OtpSecret::from_base32(s).ok())
            .ok_or(FlowError::NotFound)?;
        let now = self.store.now().timestamp().max(0) as u64;
        let step = otp::matching_step(
            &secret,
            code.trim(),
            now,
            otp::DEFAULT_STEP,
            self.config.totp_window,
        )
        .ok_or(FlowError::CodeMismatch)?;
        let guard = format!("totp_used:{user_id}:{step}");
        let span = (2 * u64::from(self.config.totp_window) + 1) * otp::DEFAULT_STEP;
        if self
            .store
            .ttl_put_if_absent(&guard, Vec::new(), Duration::seconds(span as i64))
        {
            Ok(())
        } else {
            Err(FlowError::CodeExpired)
        }
    }
}

#[cfg(test)]
mod tests;
