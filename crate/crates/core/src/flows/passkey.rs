use chrono::{DateTime, Utc};
use serde::Serialize;

use super::{FlowError, Flows, ROUTE_PASSKEY_VERIFY};
use crate::b64;
use crate::storage::{
    CeremonyPurpose, PasskeyCredentialRecord, PasskeySessionRecord, SessionError, StoreError,
    UserId,
};
use crate::tokens::SignedToken;
use crate::webauthn::{
    generate_challenge, verify_assertion, verify_registration, AuthenticationOptions,
    AuthenticationResponse, RegistrationOptions, RegistrationResponse, WebAuthnError,
};

const MAX_DEVICE_NAME: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PasskeySummary {
    /// base64url credential id
    pub id: String,
    pub device_name: String,
    pub created_at: DateTime<Utc>,
    pub counter: u32,
}

impl From<&PasskeyCredentialRecord> for PasskeySummary {
    fn from(c: &PasskeyCredentialRecord) -> Self {
        Self {
            id: b64::encode(&c.credential_id),
            device_name: c.device_name.clone(),
            created_at: c.created_at,
            counter: c.counter,
        }
    }
}

fn device_name(raw: &str) -> String {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return "Passkey".into();
    }
    trimmed.chars().take(MAX_DEVICE_NAME).collect()
}

impl Flows {
    fn open_session(
        &self,
        purpose: CeremonyPurpose,
        user_id: Option<UserId>,
    ) -> Result<PasskeySessionRecord, FlowError> {
        let challenge = generate_challenge().map_err(FlowError::Registration)?;
        let session = PasskeySessionRecord::new(
            challenge.0,
            purpose,
            user_id,
            self.store.now() + self.rp.timeout,
        );
        self.store.insert_session(session.clone())?;
        Ok(session)
    }

    /// Starts passkey registration for a signed-in user.
    pub fn passkey_register_options(
        &self,
        user_id: &UserId,
    ) -> Result<(String, RegistrationOptions), FlowError> {
        let user = self.store.find_user(user_id).ok_or(FlowError::NotFound)?;
        let session = self.open_session(CeremonyPurpose::Registration, Some(user_id.clone()))?;
        let exclude = self
            .store
            .credentials_for_user(user_id)
            .into_iter()
            .map(|c| c.credential_id)
            .collect();
        let options = self.rp.registration_options(
            crate::webauthn::Challenge(session.challenge),
            user_id,
            &user.email,
            exclude,
        );
        Ok((session.session_id, options))
    }

    /// Verifies the authenticator's response and stores the credential.
    /// The session is consumed whether verification succeeds or fails.
    pub fn passkey_register_verify(
        &self,
        user_id: &UserId,
        session_id: &str,
        response: &RegistrationResponse,
        name: &str,
        client_key: &str,
    ) -> Result<PasskeyCredentialRecord, FlowError> {
        self.check_rate(ROUTE_PASSKEY_VERIFY, client_key)?;
        let session = self
            .store
            .session(session_id)
            .ok_or(FlowError::SessionNotFound)?;
        if session.user_id.as_ref() != Some(user_id) {
            return Err(FlowError::Forbidden);
        }
        let already_registered = self.store.credential(&response.raw_id).is_some();
        let now = self.store.now();
        let mut outcome = Err(WebAuthnError::SessionAlreadyUsed);
        self.store
            .resolve_session(session_id, &mut |session| {
                outcome = verify_registration(&self.rp, response, session, now).and_then(|v| {
                    if already_registered {
                        Err(WebAuthnError::CredentialAlreadyRegistered)
                    } else {
                        Ok(v)
                    }
                });
                outcome.is_ok()
            })
            .map_err(|e| session_error(e, FlowError::Registration))?;
        let verified = outcome.map_err(FlowError::Registration)?;
        let record = PasskeyCredentialRecord {
            credential_id: verified.credential_id,
            public_key: verified.public_key,
            counter: verified.counter,
            device_name: device_name(name),
            user_id: user_id.clone(),
            created_at: now,
        };
        match self.store.insert_credential(record.clone()) {
            Ok(()) => Ok(record),
            Err(StoreError::UniquenessViolation { .. }) => Err(FlowError::Registration(
                WebAuthnError::CredentialAlreadyRegistered,
            )),
            Err(e) => Err(e.into()),
        }
    }

    /// Starts passkey login. Without an email the options allow any
    /// discoverable credential; with a known email they list that user's
    /// credentials. Unknown emails get discoverable options.
    pub fn passkey_auth_options(
        &self,
        email: Option<&str>,
    ) -> Result<(String, AuthenticationOptions), FlowError> {
        let user = email.and_then(|e| self.store.find_user_by_email(e));
        let allow = user
            .as_ref()
            .map(|u| {
                self.store
                    .credentials_for_user(&u.user_id)
                    .into_iter()
                    .map(|c| c.credential_id)
                    .collect()
            })
            .unwrap_or_default();
        let session =
            self.open_session(CeremonyPurpose::Authentication, user.map(|u| u.user_id))?;
        let options = self
            .rp
            .authentication_options(crate::webauthn::Challenge(session.challenge), allow);
        Ok((session.session_id, options))
    }

    /// Verifies an assertion, advances the stored counter and issues a token.
    pub fn passkey_auth_verify(
        &self,
        session_id: &str,
        response: &AuthenticationResponse,
        client_key: &str,
    ) -> Result<SignedToken, FlowError> {
        self.check_rate(ROUTE_PASSKEY_VERIFY, client_key)?;
        if self.store.session(session_id).is_none() {
            return Err(FlowError::SessionNotFound);
        }
        let stored = self.store.credential(&response.raw_id);
        let now = self.store.now();
        let mut outcome = Err(WebAuthnError::SessionAlreadyUsed);
        self.store
            .resolve_session(session_id, &mut |session| {
                outcome = (|| {
                    let stored = stored.as_ref().ok_or(WebAuthnError::UnknownCredential)?;
                    if session
                        .user_id
                        .as_ref()
                        .is_some_and(|u| *u != stored.user_id)
                    {
                        return Err(WebAuthnError::UnknownCredential);
                    }
                    if let Some(handle) = &response.response.user_handle {
                        if *handle != stored.user_id.handle() {
                            return Err(WebAuthnError::UserHandleMismatch);
                        }
                    }
                    verify_assertion(&self.rp, response, stored, session, now)
                })();
                outcome.is_ok()
            })
            .map_err(|e| session_error(e, FlowError::Authentication))?;
        let verified = outcome.map_err(FlowError::Authentication)?;
        let stored = stored.expect("verified assertions have a stored credential");
        self.store
            .update_counter(&stored.credential_id, verified.new_counter)
            .map_err(|e| match e {
                StoreError::CounterRegression { stored, received } => {
                    FlowError::Authentication(WebAuthnError::CounterRegression { stored, received })
                }
                StoreError::NotFound => FlowError::Authentication(WebAuthnError::UnknownCredential),
                other => other.into(),
            })?;
        let user = self
            .store
            .find_user(&stored.user_id)
            .ok_or(FlowError::Authentication(WebAuthnError::UnknownCredential))?;
        Ok(self.tokens.issue(user.user_id, &user.email))
    }

    pub fn list_passkeys(&self, user_id: &UserId) -> Vec<PasskeySummary> {
        self.store
            .credentials_for_user(user_id)
            .iter()
            .map(PasskeySummary::from)
            .collect()
    }

    pub fn delete_passkey(&self, user_id: &UserId, credential_id: &[u8]) -> Result<(), FlowError> {
        let cred = self
            .store
            .credential(credential_id)
            .ok_or(FlowError::NotFound)?;
        if &cred.user_id != user_id {
            return Err(FlowError::Forbidden);
        }
        self.store.delete_credential(credential_id)?;
        Ok(())
    }
}

fn session_error(e: SessionError, wrap: fn(WebAuthnError) -> FlowError) -> FlowError {
    match e {
        SessionError::NotFound => FlowError::SessionNotFound,
        SessionError::AlreadyUsed => wrap(WebAuthnError::SessionAlreadyUsed),
        SessionError::Expired => wrap(WebAuthnError::SessionExpired),
    }
}
