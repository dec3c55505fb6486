//! OAuth2 authorization-code provider interface and a built-in mock provider.

use std::collections::HashMap;
use std::sync::Mutex;

use chrono::Duration;
use rand::RngCore;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::b64;
use crate::clock::SharedClock;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OAuthIdentity {
    /// Provider-scoped stable subject id.
    pub subject: String,
    pub email: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OAuthError {
    #[error("authorization code is unknown, expired or already used")]
    InvalidGrant,
    #[error("provider error: {0}")]
    Provider(String),
}

pub trait OAuthProvider: Send + Sync {
    fn name(&self) -> &str;
    /// Where to send the browser to start the grant; `state` must come back unchanged.
    fn authorize_url(&self, state: &str) -> String;
    /// Redeems a single-use authorization code.
    fn exchange_code(&self, code: &str) -> Result<OAuthIdentity, OAuthError>;
}

pub const MOCK_CODE_TTL: Duration = Duration::seconds(60);

/// In-process provider: `authorize` plays the consent screen and returns the
/// redirect back to the client; codes are single-use and short-lived.
pub struct MockProvider {
    authorize_endpoint: String,
    redirect_uri: String,
    clock: SharedClock,
    codes: Mutex<HashMap<String, (OAuthIdentity, chrono::DateTime<chrono::Utc>)>>,
}

impl std::fmt::Debug for MockProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MockProvider")
            .field("authorize_endpoint", &self.authorize_endpoint)
            .field("redirect_uri", &self.redirect_uri)
            .finish_non_exhaustive()
    }
}

impl MockProvider {
    pub fn new(
        authorize_endpoint: impl Into<String>,
        redirect_uri: impl Into<String>,
        clock: SharedClock,
    ) -> Self {
        Self {
            authorize_endpoint: authorize_endpoint.into(),
            redirect_uri: redirect_uri.into(),
            clock,
            codes: Mutex::new(HashMap::new()),
        }
    }

    /// Stable subject for a mock account.
    pub fn subject_for(email: &str) -> String {
        let digest = Sha256::digest(email.trim().to_lowercase().as_bytes());
        format!("mock|{}", b64::encode(&digest[..12]))
    }

    /// Approves the grant for `email` and returns the redirect URL carrying
    /// `code` and `state`.
    pub fn authorize(&self, state: &str, email: &str) -> String {
        let mut raw = [0u8; 24];
        rand::rngs::OsRng.fill_bytes(&mut raw);
        let code = b64::encode(raw);
        let identity = OAuthIdentity {
            subject: Self::subject_for(email),
            email: email.trim().to_lowercase(),
        };
        self.codes
            .lock()
            .expect("mock provider poisoned")
            .insert(code.clone(), (identity, self.clock.now() + MOCK_CODE_TTL));
        let mut url = url::Url::parse(&self.redirect_uri).expect("valid redirect uri");
        url.query_pairs_mut()
            .append_pair("code", &code)
            .append_pair("state", state);
        url.into()
    }

    pub fn redirect_uri(&self) -> &str {
        &self.redirect_uri
    }
}

impl OAuthProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn authorize_url(&self, state: &str) -> String {
        let mut url = url::Url::parse(&self.authorize_endpoint).expect("valid authorize endpoint");
        url.query_pairs_mut()
            .append_pair("response_type", "code")
            .append_pair("client_id", "passgate-mock")
            .append_pair("redirect_uri", &self.redirect_uri)
            .append_pair("scope", "openid email")
            .append_pair("state", state);
        url.into()
    }

    fn exchange_code(&self, code: &str) -> Result<OAuthIdentity, OAuthError> {
        let now = self.clock.now();
        let mut codes = self.codes.lock().expect("mock provider poisoned");
        match codes.remove(code) {
            Some((identity, expires_at)) if now < expires_at => Ok(identity),
            _ => Err(OAuthError::InvalidGrant),
        }
    }
}
