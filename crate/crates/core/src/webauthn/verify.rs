use chrono::{DateTime, Utc};
use p256::ecdsa::signature::Verifier;
use p256::ecdsa::Signature;
use sha2::{Digest, Sha256};
use subtle::ConstantTimeEq;

use super::auth_data::{parse_authenticator_data, AuthenticatorData};
use super::cbor::{decode_cbor, CborValue};
use super::client_data::{parse_client_data, TYPE_CREATE, TYPE_GET};
use super::cose::{CosePublicKey, COSE_ALG_ES256};
use super::types::{AuthenticationResponse, RegistrationResponse};
use super::{RelyingParty, WebAuthnError};
use crate::storage::{
    CeremonyPurpose, PasskeyCredentialRecord, PasskeySessionRecord, SessionStatus,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttestationFormat {
    None,
    /// Packed self-attestation (no certificate chain).
    PackedSelf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttestationObject {
    pub format: String,
    pub auth_data: AuthenticatorData,
    pub attestation_statement: CborValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedRegistration {
    pub credential_id: Vec<u8>,
    pub public_key: CosePublicKey,
    pub counter: u32,
    pub aaguid: [u8; 16],
    pub user_verified: bool,
    pub format: AttestationFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifiedAuthentication {
    pub new_counter: u32,
    pub user_verified: bool,
}

pub fn parse_attestation_object(bytes: &[u8]) -> Result<AttestationObject, WebAuthnError> {
    let value = decode_cbor(bytes).map_err(|_| WebAuthnError::MalformedAttestation("not CBOR"))?;
    if value.as_map().is_none() {
        return Err(WebAuthnError::MalformedAttestation("not a map"));
    }
    let format = value
        .get_text_key("fmt")
        .and_then(CborValue::as_text)
        .ok_or(WebAuthnError::MalformedAttestation("fmt"))?
        .to_owned();
    let auth_data = value
        .get_text_key("authData")
        .and_then(CborValue::as_bytes)
        .ok_or(WebAuthnError::MalformedAttestation("authData"))?;
    let attestation_statement = value
        .get_text_key("attStmt")
        .filter(|v| v.as_map().is_some())
        .ok_or(WebAuthnError::MalformedAttestation("attStmt"))?
        .clone();
    Ok(AttestationObject {
        format,
        auth_data: parse_authenticator_data(auth_data)?,
        attestation_statement,
    })
}

fn check_session(
    session: &PasskeySessionRecord,
    purpose: CeremonyPurpose,
    now: DateTime<Utc>,
) -> Result<(), WebAuthnError> {
    match session.status {
        SessionStatus::Completed => return Err(WebAuthnError::SessionAlreadyUsed),
        SessionStatus::Expired if now < session.expires_at => {
            return Err(WebAuthnError::SessionAlreadyUsed)
        }
        SessionStatus::Expired => return Err(WebAuthnError::SessionExpired),
        SessionStatus::Pending if now >= session.expires_at => {
            return Err(WebAuthnError::SessionExpired)
        }
        SessionStatus::Pending => {}
    }
    if session.purpose != purpose {
        return Err(WebAuthnError::WrongCeremony);
    }
    Ok(())
}

fn check_auth_data(rp: &RelyingParty, auth: &AuthenticatorData) -> Result<(), WebAuthnError> {
    if !bool::from(auth.rp_id_hash.ct_eq(&rp.rp_id_hash())) {
        return Err(WebAuthnError::RpIdHashMismatch);
    }
    if !auth.flags.user_present() {
        return Err(WebAuthnError::UserNotPresent);
    }
    if rp.require_user_verification && !auth.flags.user_verified() {
        return Err(WebAuthnError::UserVerificationRequired);
    }
    Ok(())
}

/// ECDSA-P256-SHA256 over `auth_data || SHA-256(client_data_json)`, DER signature.
fn verify_es256(
    key: &CosePublicKey,
    auth_data: &[u8],
    client_data_json: &[u8],
    der_signature: &[u8],
) -> Result<(), WebAuthnError> {
    let verifying_key = key
        .verifying_key()
        .map_err(|_| WebAuthnError::BadSignature)?;
    let signature = Signature::from_der(der_signature).map_err(|_| WebAuthnError::BadSignature)?;
    let mut message = Vec::with_capacity(auth_data.len() + 32);
    message.extend_from_slice(auth_data);
    message.extend_from_slice(&Sha256::digest(client_data_json));
    verifying_key
        .verify(&message, &signature)
        .map_err(|_| WebAuthnError::BadSignature)
}

/// Verifies a registration response against a pending registration session.
///
/// Checks, in order: session state, client data (type, challenge, origin),
/// RP ID hash, user presence (and verification when required), attested
/// credential, attestation format and statement, credential id echo.
pub fn verify_registration(
    rp: &RelyingParty,
    response: &RegistrationResponse,
    session: &PasskeySessionRecord,
    now: DateTime<Utc>,
) -> Result<VerifiedRegistration, WebAuthnError> {
    check_session(session, CeremonyPurpose::Registration, now)?;
    let client_json = &response.response.client_data_json;
    parse_client_data(client_json, TYPE_CREATE, &session.challenge, &rp.origin)?;

    let attestation = parse_attestation_object(&response.response.attestation_object)?;
    let auth = &attestation.auth_data;
    check_auth_data(rp, auth)?;
    let credential = auth
        .attested_credential
        .as_ref()
        .ok_or(WebAuthnError::MissingAttestedCredential)?;

    let format = match attestation.format.as_str() {
        "none" => {
            if attestation.attestation_statement.as_map() != Some(&[]) {
                return Err(WebAuthnError::MalformedAttestation("none with statement"));
            }
            AttestationFormat::None
        }
        "packed" => {
            let stmt = &attestation.attestation_statement;
            if stmt.get_text_key("x5c").is_some() {
                return Err(WebAuthnError::UnsupportedAttestationFormat(
                    "packed with certificate chain".into(),
                ));
            }
            let alg = stmt
                .get_text_key("alg")
                .and_then(CborValue::as_integer)
                .ok_or(WebAuthnError::MalformedAttestation("packed alg"))?;
            if alg != COSE_ALG_ES256 as i128 {
                return Err(WebAuthnError::MalformedAttestation("packed alg"));
            }
            let sig = stmt
                .get_text_key("sig")
                .and_then(CborValue::as_bytes)
                .ok_or(WebAuthnError::MalformedAttestation("packed sig"))?;
            verify_es256(&credential.public_key, &auth.raw, client_json, sig)?;
            AttestationFormat::PackedSelf
        }
        other => {
            return Err(WebAuthnError::UnsupportedAttestationFormat(
                other.to_owned(),
            ))
        }
    };

    if response.raw_id != credential.credential_id {
        return Err(WebAuthnError::CredentialIdMismatch);
    }

    Ok(VerifiedRegistration {
        credential_id: credential.credential_id.clone(),
        public_key: credential.public_key.clone(),
        counter: auth.counter,
        aaguid: credential.aaguid,
        user_verified: auth.flags.user_verified(),
        format,
    })
}

/// Verifies an assertion for `stored` against a pending authentication session.
///
/// Counter rule: accept when the received counter exceeds the stored one, or
/// when both are zero (authenticators without counters); otherwise
/// [`WebAuthnError::CounterRegression`].
pub fn verify_assertion(
    rp: &RelyingParty,
    response: &AuthenticationResponse,
    stored: &PasskeyCredentialRecord,
    session: &PasskeySessionRecord,
    now: DateTime<Utc>,
) -> Result<VerifiedAuthentication, WebAuthnError> {
    check_session(session, CeremonyPurpose::Authentication, now)?;
    if response.raw_id != stored.credential_id {
        return Err(WebAuthnError::CredentialIdMismatch);
    }
    let assertion = &response.response;
    parse_client_data(
        &assertion.client_data_json,
        TYPE_GET,
        &session.challenge,
        &rp.origin,
    )?;
    let auth = parse_authenticator_data(&assertion.authenticator_data)?;
    check_auth_data(rp, &auth)?;
    verify_es256(
        &stored.public_key,
        &assertion.authenticator_data,
        &assertion.client_data_json,
        &assertion.signature,
    )?;
    let received = auth.counter;
    if received > stored.counter || (received == 0 && stored.counter == 0) {
        Ok(VerifiedAuthentication {
            new_counter: received,
            user_verified: auth.flags.user_verified(),
        })
    } else {
        Err(WebAuthnError::CounterRegression {
            stored: stored.counter,
            received,
        })
    }
}
