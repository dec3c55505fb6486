//! Compact HS256 JWTs and blacklist-based revocation.

use std::sync::Arc;

use chrono::Duration;
use hmac::{Hmac, Mac};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::Sha256;
use thiserror::Error;

use crate::b64;
use crate::storage::{Store, UserId, BLACKLIST_TTL};

pub const MIN_SECRET_BYTES: usize = 32;
pub const DEFAULT_TOKEN_TTL: Duration = Duration::hours(1);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenError {
    #[error("token signature is invalid")]
    BadSignature,
    #[error("token has expired")]
    Expired,
    #[error("Token has been revoked")]
    Revoked,
    #[error("malformed token: {0}")]
    Malformed(&'static str),
    #[error("token configuration: {0}")]
    ConfigError(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenClaims {
    #[serde(rename = "sub")]
    pub subject: UserId,
    pub email: String,
    #[serde(rename = "iat")]
    pub issued_at: i64,
    #[serde(rename = "exp")]
    pub expires_at: i64,
    #[serde(rename = "jti")]
    pub token_id: String,
}

impl TokenClaims {
    pub fn new(subject: UserId, email: &str, issued_at: i64, lifetime: Duration) -> Self {
        let mut jti = [0u8; 16];
        rand::rngs::OsRng.fill_bytes(&mut jti);
        Self {
            subject,
            email: email.to_owned(),
            issued_at,
            expires_at: issued_at + lifetime.num_seconds(),
            token_id: b64::encode(jti),
        }
    }
}

/// `header.payload.signature`, each segment base64url without padding.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SignedToken(pub String);

impl SignedToken {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for SignedToken {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    alg: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    typ: Option<String>,
}

const ALLOWED_ALGS: &[&str] = &["HS256"];

fn mac(secret: &[u8]) -> Hmac<Sha256> {
    Hmac::<Sha256>::new_from_slice(secret).expect("hmac accepts any key length")
}

pub fn sign_token(claims: &TokenClaims, secret: &[u8]) -> Result<SignedToken, TokenError> {
    if secret.len() < MIN_SECRET_BYTES {
        return Err(TokenError::ConfigError(format!(
            "secret must be at least {MIN_SECRET_BYTES} bytes"
        )));
    }
    let header = serde_json::to_vec(&Header {
        alg: "HS256".into(),
        typ: Some("JWT".into()),
    })
    .expect("header serializes");
    let payload = serde_json::to_vec(claims).expect("claims serialize");
    let signing_input = format!("{}.{}", b64::encode(header), b64::encode(payload));
    let mut m = mac(secret);
    m.update(signing_input.as_bytes());
    let sig = m.finalize().into_bytes();
    Ok(SignedToken(format!("{signing_input}.{}", b64::encode(sig))))
}

/// Checks structure, algorithm, signature and expiry. Does not consult the blacklist.
pub fn decode_token(token: &str, secret: &[u8], now: i64) -> Result<TokenClaims, TokenError> {
    let mut parts = token.split('.');
    let (Some(h), Some(p), Some(s), None) =
        (parts.next(), parts.next(), parts.next(), parts.next())
    else {
        return Err(TokenError::Malformed("expected three segments"));
    };
    let header: Header = b64::decode(h)
        .ok()
        .and_then(|raw| serde_json::from_slice(&raw).ok())
        .ok_or(TokenError::Malformed("header"))?;
    if !ALLOWED_ALGS.contains(&header.alg.as_str()) {
        return Err(TokenError::Malformed("algorithm not allowed"));
    }
    let sig = b64::decode(s).map_err(|_| TokenError::Malformed("signature encoding"))?;
    let mut m = mac(secret);
    m.update(h.as_bytes());
    m.update(b".");
    m.update(p.as_bytes());
    m.verify_slice(&sig).map_err(|_| TokenError::BadSignature)?;
    let claims: TokenClaims = b64::decode(p)
        .ok()
        .and_then(|raw| serde_json::from_slice(&raw).ok())
        .ok_or(TokenError::Malformed("payload"))?;
    if now >= claims.expires_at {
        return Err(TokenError::Expired);
    }
    Ok(claims)
}

/// Issues, verifies and revokes tokens against the store's blacklist.
#[derive(Clone)]
pub struct TokenService {
    secret: Arc<[u8]>,
    lifetime: Duration,
    store: Arc<Store>,
}

impl std::fmt::Debug for TokenService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TokenService")
            .field("lifetime", &self.lifetime)
            .finish_non_exhaustive()
    }
}

impl TokenService {
    /// Fails unless the secret is long enough and the token lifetime fits
    /// inside the blacklist TTL (otherwise a revoked token could outlive its
    /// blacklist entry).
    pub fn new(
        secret: impl Into<Vec<u8>>,
        lifetime: Duration,
        store: Arc<Store>,
    ) -> Result<Self, TokenError> {
        let secret = secret.into();
        if secret.len() < MIN_SECRET_BYTES {
            return Err(TokenError::ConfigError(format!(
                "secret must be at least {MIN_SECRET_BYTES} bytes"
            )));
        }
        if lifetime <= Duration::zero() || lifetime > BLACKLIST_TTL {
            return Err(TokenError::ConfigError(format!(
                "token lifetime must be in (0, {}s]",
                BLACKLIST_TTL.num_seconds()
            )));
        }
        Ok(Self {
            secret: secret.into(),
            lifetime,
            store,
        })
    }

    pub fn lifetime(&self) -> Duration {
        self.lifetime
    }

    pub fn issue(&self, subject: UserId, email: &str) -> SignedToken {
        let claims = TokenClaims::new(subject, email, self.store.now().timestamp(), self.lifetime);
        sign_token(&claims, &self.secret).expect("secret length checked at construction")
    }

    pub fn verify(&self, token: &str) -> Result<TokenClaims, TokenError> {
        let claims = decode_token(token, &self.secret, self.store.now().timestamp())?;
        if self.store.blacklist_contains(token) {
            return Err(TokenError::Revoked);
        }
        Ok(claims)
    }

    /// Blacklists a well-formed, correctly signed token. Idempotent.
    pub fn revoke(&self, token: &str) -> Result<(), TokenError> {
        match decode_token(token, &self.secret, self.store.now().timestamp()) {
            Ok(_) | Err(TokenError::Expired) => {}
            Err(e) => return Err(e),
        }
        self.store
            .blacklist_add(token)
            .map_err(|_| TokenError::Malformed("empty token"))
    }
}
