use chrono::{DateTime, Duration, Utc};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::b64;
use crate::password::PasswordHash;
use crate::webauthn::CosePublicKey;

/// Opaque account identifier (base64url of 16 random bytes).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub String);

impl UserId {
    pub fn random() -> Self {
        let mut raw = [0u8; 16];
        rand::rngs::OsRng.fill_bytes(&mut raw);
        Self(b64::encode(raw))
    }

    /// The WebAuthn user handle for this account.
    pub fn handle(&self) -> Vec<u8> {
        self.0.as_bytes().to_vec()
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for UserId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: UserId,
    pub email: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password_hash: Option<PasswordHash>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oauth_subject: Option<String>,
    /// Base32 TOTP secret, when the user enrolled an authenticator app.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub totp_secret: Option<String>,
    pub created_at: DateTime<Utc>,
}

impl UserRecord {
    pub fn new(email: &str, now: DateTime<Utc>) -> Self {
        Self {
            user_id: UserId::random(),
            email: super::normalize_email(email),
            password_hash: None,
            oauth_subject: None,
            totp_secret: None,
            created_at: now,
        }
    }
}

/// Pre-verification staging row for an email registration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TempRegistration {
    pub email: String,
    #[serde(rename = "otpVerified")]
    pub otp_verified: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub password_hash: Option<PasswordHash>,
    pub created_at: DateTime<Utc>,
}

impl TempRegistration {
    pub fn new(email: String, now: DateTime<Utc>) -> Self {
        Self {
            email,
            otp_verified: false,
            password_hash: None,
            created_at: now,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasskeyCredentialRecord {
    #[serde(with = "b64::bytes")]
    pub credential_id: Vec<u8>,
    pub public_key: CosePublicKey,
    pub counter: u32,
    pub device_name: String,
    pub user_id: UserId,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CeremonyPurpose {
    Registration,
    Authentication,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Pending,
    Completed,
    Expired,
}

/// State of one registration or authentication ceremony.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PasskeySessionRecord {
    pub session_id: String,
    #[serde(with = "b64::array32")]
    pub challenge: [u8; 32],
    pub purpose: CeremonyPurpose,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_id: Option<UserId>,
    pub expires_at: DateTime<Utc>,
    pub status: SessionStatus,
}

impl PasskeySessionRecord {
    pub fn new(
        challenge: [u8; 32],
        purpose: CeremonyPurpose,
        user_id: Option<UserId>,
        expires_at: DateTime<Utc>,
    ) -> Self {
        let mut raw = [0u8; 16];
        rand::rngs::OsRng.fill_bytes(&mut raw);
        Self {
            session_id: b64::encode(raw),
            challenge,
            purpose,
            user_id,
            expires_at,
            status: SessionStatus::Pending,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenBlacklistEntry {
    pub token: String,
    pub created_at: DateTime<Utc>,
    pub ttl_secs: i64,
}

impl TokenBlacklistEntry {
    pub fn expires_at(&self) -> DateTime<Utc> {
        self.created_at + Duration::seconds(self.ttl_secs)
    }

    pub fn is_live(&self, now: DateTime<Utc>) -> bool {
        now < self.expires_at()
    }
}
