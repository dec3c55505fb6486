//! Software FIDO2 authenticator plus the browser's client-data role.
//!
//! Produces the same JSON shapes a browser posts after
//! `navigator.credentials.create()` / `.get()`, so it can drive the relying
//! party directly or over HTTP. A [`Tamper`] knob makes exactly one field of
//! the output deviate from the honest value.

mod encode;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use p256::ecdsa::signature::Signer;
use p256::ecdsa::{Signature, SigningKey};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use encode::{canonical_map, encode_cbor};

use crate::b64;
use crate::webauthn::{
    AssertionResponse, AttestationResponse, AuthenticationOptions, AuthenticationResponse,
    CborValue, CosePublicKey, RegistrationOptions, RegistrationResponse, COSE_ALG_ES256, FLAG_AT,
    FLAG_UP, FLAG_UV, PUBLIC_KEY_TYPE, TYPE_CREATE, TYPE_GET,
};

pub const EMULATOR_AAGUID: [u8; 16] = *b"passgate-softkey";
pub const EVIL_ORIGIN: &str = "https://evil.example";
pub const EVIL_RP_ID: &str = "evil.example";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EmulatorError {
    #[error("no credential with that id is scoped to this RP")]
    UnknownCredential,
    #[error("frozen_counter on create needs an existing credential for this RP")]
    NothingToReplay,
}

/// One deliberate deviation from honest authenticator/browser output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Tamper {
    /// Client data origin is [`EVIL_ORIGIN`].
    WrongOrigin,
    /// Client data type is the other ceremony's type.
    WrongType,
    /// Client data carries a challenge that was never issued.
    StaleChallenge,
    /// The signature counter does not advance. On create, an already
    /// registered credential is presented again.
    FrozenCounter,
    /// The signature is corrupted (create uses packed self-attestation).
    BadSignature,
    /// Authenticator data is scoped to [`EVIL_RP_ID`], correctly signed.
    WrongRpHash,
}

impl Tamper {
    pub const ALL: [Tamper; 6] = [
        Tamper::WrongOrigin,
        Tamper::WrongType,
        Tamper::StaleChallenge,
        Tamper::FrozenCounter,
        Tamper::BadSignature,
        Tamper::WrongRpHash,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Tamper::WrongOrigin => "wrong_origin",
            Tamper::WrongType => "wrong_type",
            Tamper::StaleChallenge => "stale_challenge",
            Tamper::FrozenCounter => "frozen_counter",
            Tamper::BadSignature => "bad_signature",
            Tamper::WrongRpHash => "wrong_rp_hash",
        }
    }
}

impl fmt::Display for Tamper {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tamper {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tamper::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tamper knob {s:?}"))
    }
}

struct StoredCredential {
    key: SigningKey,
    rp_id: String,
    counter: u32,
    user_handle: Vec<u8>,
    seq: u64,
}

pub struct EmulatedAuthenticator {
    rng: ChaCha20Rng,
    aaguid: [u8; 16],
    credentials: HashMap<Vec<u8>, StoredCredential>,
    tamper: Option<Tamper>,
    packed_attestation: bool,
    user_verified: bool,
    seq: u64,
}

impl fmt::Debug for EmulatedAuthenticator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmulatedAuthenticator")
            .field("credentials", &self.credentials.len())
            .field("tamper", &self.tamper)
            .finish_non_exhaustive()
    }
}

impl Default for EmulatedAuthenticator {
    fn default() -> Self {
        Self::new()
    }
}

impl EmulatedAuthenticator {
    pub fn new() -> Self {
        Self::from_rng(ChaCha20Rng::from_entropy())
    }

    /// Reproducible keys, credential ids and stale challenges.
    pub fn seeded(seed: u64) -> Self {
        Self::from_rng(ChaCha20Rng::seed_from_u64(seed))
    }

    fn from_rng(rng: ChaCha20Rng) -> Self {
        Self {
            rng,
            aaguid: EMULATOR_AAGUID,
            credentials: HashMap::new(),
            tamper: None,
            packed_attestation: false,
            user_verified: true,
            seq: 0,
        }
    }

    pub fn with_tamper(mut self, knob: Tamper) -> Self {
        self.tamper = Some(knob);
        self
    }

    pub fn set_tamper(&mut self, knob: Option<Tamper>) {
        self.tamper = knob;
    }

    /// Emit packed self-attestation instead of `none`.
    pub fn with_packed_attestation(mut self, packed: bool) -> Self {
        self.packed_attestation = packed;
        self
    }

    pub fn set_user_verified(&mut self, uv: bool) {
        self.user_verified = uv;
    }

    pub fn aaguid(&self) -> [u8; 16] {
        self.aaguid
    }

    pub fn counter(&self, credential_id: &[u8]) -> Option<u32> {
        self.credentials.get(credential_id).map(|c| c.counter)
    }

    /// Credential ids scoped to `rp_id`, most recently created first.
    pub fn credentials_for(&self, rp_id: &str) -> Vec<Vec<u8>> {
        let mut ids: Vec<_> = self
            .credentials
            .iter()
            .filter(|(_, c)| c.rp_id == rp_id)
            .map(|(id, c)| (c.seq, id.clone()))
            .collect();
        ids.sort_by_key(|a| std::cmp::Reverse(a.0));
        ids.into_iter().map(|(_, id)| id).collect()
    }

    pub fn public_key(&self, credential_id: &[u8]) -> Option<CosePublicKey> {
        self.credentials
            .get(credential_id)
            .map(|c| CosePublicKey::from_verifying_key(c.key.verifying_key()))
    }

    fn client_data(&mut self, honest_type: &str, challenge: &[u8; 32], origin: &str) -> Vec<u8> {
        let other_type = if honest_type == TYPE_CREATE {
            TYPE_GET
        } else {
            TYPE_CREATE
        };
        let ty = if self.tamper == Some(Tamper::WrongType) {
            other_type
        } else {
            honest_type
        };
        let origin = if self.tamper == Some(Tamper::WrongOrigin) {
            EVIL_ORIGIN
        } else {
            origin
        };
        let challenge = if self.tamper == Some(Tamper::StaleChallenge) {
            let mut stale = [0u8; 32];
            self.rng.fill_bytes(&mut stale);
            stale
        } else {
            *challenge
        };
        serde_json::to_vec(&serde_json::json!({
            "type": ty,
            "challenge": b64::encode(challenge),
            "origin": origin,
            "crossOrigin": false,
        }))
        .expect("client data serializes")
    }

    fn rp_id_hash(&self, rp_id: &str) -> [u8; 32] {
        let scoped = if self.tamper == Some(Tamper::WrongRpHash) {
            EVIL_RP_ID
        } else {
            rp_id
        };
        Sha256::digest(scoped.as_bytes()).into()
    }

    fn flags(&self) -> u8 {
        if self.user_verified {
            FLAG_UP | FLAG_UV
        } else {
            FLAG_UP
        }
    }

    fn sign(&self, key: &SigningKey, auth_data: &[u8], client_data: &[u8]) -> Vec<u8> {
        let mut message = auth_data.to_vec();
        message.extend_from_slice(&Sha256::digest(client_data));
        let sig: Signature = key.sign(&message);
        let mut der = sig.to_der().as_bytes().to_vec();
        if self.tamper == Some(Tamper::BadSignature) {
            let last = der.len() - 1;
            der[last] ^= 0x01;
        }
        der
    }

    /// Plays `navigator.credentials.create()` for `options` at `origin`.
    pub fn emulate_create(
        &mut self,
        options: &RegistrationOptions,
        origin: &str,
    ) -> Result<RegistrationResponse, EmulatorError> {
        let rp_id = options.rp.id.as_str();
        let credential_id = if self.tamper == Some(Tamper::FrozenCounter) {
            self.credentials_for(rp_id)
                .into_iter()
                .next()
                .ok_or(EmulatorError::NothingToReplay)?
        } else {
            let mut id = vec![0u8; 32];
            self.rng.fill_bytes(&mut id);
            self.seq += 1;
            self.credentials.insert(
                id.clone(),
                StoredCredential {
                    key: SigningKey::random(&mut self.rng),
                    rp_id: rp_id.to_owned(),
                    counter: 0,
                    user_handle: options.user.id.clone(),
                    seq: self.seq,
                },
            );
            id
        };
        let client_data = self.client_data(TYPE_CREATE, &options.challenge, origin);
        let cred = &self.credentials[&credential_id];
        let public_key = CosePublicKey::from_verifying_key(cred.key.verifying_key());
        let mut auth_data = Vec::with_capacity(256);
        auth_data.extend_from_slice(&self.rp_id_hash(rp_id));
        auth_data.push(self.flags() | FLAG_AT);
        auth_data.extend_from_slice(&cred.counter.to_be_bytes());
        auth_data.extend_from_slice(&self.aaguid);
        auth_data.extend_from_slice(&(credential_id.len() as u16).to_be_bytes());
        auth_data.extend_from_slice(&credential_id);
        auth_data.extend_from_slice(&encode_cbor(&public_key.to_cbor()));

        let packed = self.packed_attestation || self.tamper == Some(Tamper::BadSignature);
        let (fmt, att_stmt) = if packed {
            let sig = self.sign(&cred.key, &auth_data, &client_data);
            (
                "packed",
                canonical_map(vec![
                    (CborValue::text("alg"), CborValue::int(COSE_ALG_ES256)),
                    (CborValue::text("sig"), CborValue::Bytes(sig)),
                ]),
            )
        } else {
            ("none", CborValue::Map(vec![]))
        };
        let attestation_object = encode_cbor(&canonical_map(vec![
            (CborValue::text("fmt"), CborValue::text(fmt)),
            (CborValue::text("attStmt"), att_stmt),
            (CborValue::text("authData"), CborValue::Bytes(auth_data)),
        ]));

        Ok(RegistrationResponse {
            id: b64::encode(&credential_id),
            raw_id: credential_id,
            kind: PUBLIC_KEY_TYPE.into(),
            response: AttestationResponse {
                client_data_json: client_data,
                attestation_object,
                transports: vec!["internal".into()],
            },
            client_extension_results: Default::default(),
        })
    }

    /// Plays `navigator.credentials.get()` with the given credential.
    pub fn emulate_get(
        &mut self,
        options: &AuthenticationOptions,
        origin: &str,
        credential_id: &[u8],
    ) -> Result<AuthenticationResponse, EmulatorError> {
        let allowed = options.allow_credentials.is_empty()
            || options
                .allow_credentials
                .iter()
                .any(|d| d.id == credential_id);
        let frozen = self.tamper == Some(Tamper::FrozenCounter);
        let cred = self
            .credentials
            .get_mut(credential_id)
            .filter(|c| c.rp_id == options.rp_id && allowed)
            .ok_or(EmulatorError::UnknownCredential)?;
        if !frozen {
            cred.counter = cred.counter.wrapping_add(1);
        }
        let counter = cred.counter;
        let user_handle = cred.user_handle.clone();

        let client_data = self.client_data(TYPE_GET, &options.challenge, origin);
        let mut auth_data = Vec::with_capacity(37);
        auth_data.extend_from_slice(&self.rp_id_hash(&options.rp_id));
        auth_data.push(self.flags());
        auth_data.extend_from_slice(&counter.to_be_bytes());
        let key = &self.credentials[credential_id].key;
        let signature = self.sign(key, &auth_data, &client_data);

        Ok(AuthenticationResponse {
            id: b64::encode(credential_id),
            raw_id: credential_id.to_vec(),
            kind: PUBLIC_KEY_TYPE.into(),
            response: AssertionResponse {
                client_data_json: client_data,
                authenticator_data: auth_data,
                signature,
                user_handle: Some(user_handle),
            },
            client_extension_results: Default::default(),
        })
    }

    /// Like [`emulate_get`](Self::emulate_get) but picks the newest credential
    /// for the RP (or the first allowed one), as a discoverable-credential prompt would.
    pub fn emulate_get_any(
        &mut self,
        options: &AuthenticationOptions,
        origin: &str,
    ) -> Result<AuthenticationResponse, EmulatorError> {
        let candidates = self.credentials_for(&options.rp_id);
        let chosen = candidates
            .into_iter()
            .find(|id| {
                options.allow_credentials.is_empty()
                    || options.allow_credentials.iter().any(|d| &d.id == id)
            })
            .ok_or(EmulatorError::UnknownCredential)?;
        self.emulate_get(options, origin, &chosen)
    }
}
