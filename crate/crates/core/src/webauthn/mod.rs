//! Relying-party side of passkey registration and authentication: options,
//! binary parsing, and attestation / assertion verification (ES256 only).

mod auth_data;
pub mod cbor;
mod client_data;
mod cose;
mod types;
mod verify;

use chrono::Duration;
use rand::RngCore;
use thiserror::Error;

pub use auth_data::{
    parse_authenticator_data, AttestedCredential, AuthDataError, AuthenticatorData,
    AuthenticatorFlags, FLAG_AT, FLAG_ED, FLAG_UP, FLAG_UV, MIN_AUTH_DATA_LEN,
};
pub use cbor::{decode_cbor, CborError, CborValue};
pub use client_data::{parse_client_data, ClientData, TYPE_CREATE, TYPE_GET};
pub use cose::{CoseError, CosePublicKey, COSE_ALG_ES256};
pub use types::{
    AssertionResponse, AttestationResponse, AuthenticationOptions, AuthenticationResponse,
    AuthenticatorSelection, CredentialDescriptor, PubKeyCredParam, RegistrationOptions,
    RegistrationResponse, RelyingPartyEntity, UserEntity, UserVerification, PUBLIC_KEY_TYPE,
};
pub use verify::{
    parse_attestation_object, verify_assertion, verify_registration, AttestationFormat,
    AttestationObject, VerifiedAuthentication, VerifiedRegistration,
};

use crate::storage::UserId;

pub const DEFAULT_SESSION_TTL: Duration = Duration::seconds(300);

/// 32 bytes from the OS CSPRNG, fresh per ceremony.
#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Challenge(pub [u8; 32]);

impl std::fmt::Debug for Challenge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Challenge({})", crate::b64::encode(self.0))
    }
}

pub fn generate_challenge() -> Result<Challenge, WebAuthnError> {
    let mut bytes = [0u8; 32];
    rand::rngs::OsRng
        .try_fill_bytes(&mut bytes)
        .map_err(|e| WebAuthnError::Entropy(e.to_string()))?;
    Ok(Challenge(bytes))
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WebAuthnError {
    #[error("client data is not valid JSON")]
    MalformedClientData,
    #[error("client data type does not match the ceremony")]
    TypeMismatch,
    #[error("client data challenge does not match the session")]
    ChallengeMismatch,
    #[error("client data origin does not match the expected origin")]
    OriginMismatch,
    #[error("authenticator data is for a different RP ID")]
    RpIdHashMismatch,
    #[error("user presence flag not set")]
    UserNotPresent,
    #[error("user verification required but not performed")]
    UserVerificationRequired,
    #[error("malformed attestation object: {0}")]
    MalformedAttestation(&'static str),
    #[error("unsupported attestation format {0:?}")]
    UnsupportedAttestationFormat(String),
    #[error("registration carries no attested credential")]
    MissingAttestedCredential,
    #[error(transparent)]
    AuthData(#[from] AuthDataError),
    #[error("signature verification failed")]
    BadSignature,
    #[error("signature counter did not increase (stored {stored}, received {received}); possible cloned authenticator")]
    CounterRegression { stored: u32, received: u32 },
    #[error("credential id in response does not match the authenticator data")]
    CredentialIdMismatch,
    #[error("credential is already registered")]
    CredentialAlreadyRegistered,
    #[error("unknown credential")]
    UnknownCredential,
    #[error("user handle does not match the credential owner")]
    UserHandleMismatch,
    #[error("ceremony session has already been used")]
    SessionAlreadyUsed,
    #[error("ceremony session has expired")]
    SessionExpired,
    #[error("session belongs to a different ceremony")]
    WrongCeremony,
    #[error("entropy source failed: {0}")]
    Entropy(String),
}

impl WebAuthnError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            Self::MalformedClientData => "malformed_client_data",
            Self::TypeMismatch => "type_mismatch",
            Self::ChallengeMismatch => "challenge_mismatch",
            Self::OriginMismatch => "origin_mismatch",
            Self::RpIdHashMismatch => "rp_id_hash_mismatch",
            Self::UserNotPresent => "user_not_present",
            Self::UserVerificationRequired => "user_verification_required",
            Self::MalformedAttestation(_) => "malformed_attestation",
            Self::UnsupportedAttestationFormat(_) => "unsupported_attestation_format",
            Self::MissingAttestedCredential => "missing_attested_credential",
            Self::AuthData(_) => "malformed_authenticator_data",
            Self::BadSignature => "bad_signature",
            Self::CounterRegression { .. } => "counter_regression",
            Self::CredentialIdMismatch => "credential_id_mismatch",
            Self::CredentialAlreadyRegistered => "credential_already_registered",
            Self::UnknownCredential => "unknown_credential",
            Self::UserHandleMismatch => "user_handle_mismatch",
            Self::SessionAlreadyUsed => "session_already_used",
            Self::SessionExpired => "session_expired",
            Self::WrongCeremony => "wrong_ceremony",
            Self::Entropy(_) => "entropy_error",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RpConfigError {
    #[error("invalid origin {0:?}")]
    BadOrigin(String),
    #[error("RP ID {rp_id:?} is not a registrable suffix of origin host {host:?}")]
    RpIdNotSuffix { rp_id: String, host: String },
}

/// Checks that `rp_id` equals the origin's host or is a dotted suffix of it,
/// and that the origin is https (plain http only for localhost).
pub fn validate_rp_id(rp_id: &str, origin: &str) -> Result<(), RpConfigError> {
    let bad = || RpConfigError::BadOrigin(origin.to_owned());
    let url = url::Url::parse(origin).map_err(|_| bad())?;
    let host = url.host_str().ok_or_else(bad)?.to_ascii_lowercase();
    let path_ok = url.path() == "/" || url.path().is_empty();
    if !path_ok || url.query().is_some() || url.fragment().is_some() || origin.ends_with('/') {
        return Err(bad());
    }
    match url.scheme() {
        "https" => {}
        "http" if host == "localhost" || host.ends_with(".localhost") => {}
        _ => return Err(bad()),
    }
    let rp_id = rp_id.to_ascii_lowercase();
    let registrable = rp_id == "localhost" || (rp_id.contains('.') && !rp_id.starts_with('.'));
    if registrable && (host == rp_id || host.ends_with(&format!(".{rp_id}"))) {
        Ok(())
    } else {
        Err(RpConfigError::RpIdNotSuffix { rp_id, host })
    }
}

/// Relying-party identity and policy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelyingParty {
    pub id: String,
    pub name: String,
    pub origin: String,
    pub require_user_verification: bool,
    pub timeout: Duration,
}

impl RelyingParty {
    pub fn new(id: &str, name: &str, origin: &str) -> Result<Self, RpConfigError> {
        validate_rp_id(id, origin)?;
        Ok(Self {
            id: id.to_ascii_lowercase(),
            name: name.to_owned(),
            origin: origin.to_owned(),
            require_user_verification: false,
            timeout: DEFAULT_SESSION_TTL,
        })
    }

    pub fn rp_id_hash(&self) -> [u8; 32] {
        use sha2::{Digest, Sha256};
        Sha256::digest(self.id.as_bytes()).into()
    }

    fn user_verification(&self) -> UserVerification {
        if self.require_user_verification {
            UserVerification::Required
        } else {
            UserVerification::Preferred
        }
    }

    pub fn registration_options(
        &self,
        challenge: Challenge,
        user_id: &UserId,
        email: &str,
        exclude: Vec<Vec<u8>>,
    ) -> RegistrationOptions {
        RegistrationOptions {
            challenge: challenge.0,
            rp: RelyingPartyEntity {
                id: self.id.clone(),
                name: self.name.clone(),
            },
            user: UserEntity {
                id: user_id.handle(),
                name: email.to_owned(),
                display_name: email.to_owned(),
            },
            pub_key_cred_params: vec![PubKeyCredParam {
                kind: PUBLIC_KEY_TYPE.into(),
                alg: COSE_ALG_ES256,
            }],
            timeout_ms: self.timeout.num_milliseconds() as u64,
            exclude_credentials: exclude
                .into_iter()
                .map(CredentialDescriptor::public_key)
                .collect(),
            attestation: "none".into(),
            authenticator_selection: AuthenticatorSelection {
                resident_key: "preferred".into(),
                user_verification: self.user_verification(),
            },
        }
    }

    pub fn authentication_options(
        &self,
        challenge: Challenge,
        allow: Vec<Vec<u8>>,
    ) -> AuthenticationOptions {
        AuthenticationOptions {
            challenge: challenge.0,
            rp_id: self.id.clone(),
            allow_credentials: allow
                .into_iter()
                .map(CredentialDescriptor::public_key)
                .collect(),
            timeout_ms: self.timeout.num_milliseconds() as u64,
            user_verification: self.user_verification(),
        }
    }
}
