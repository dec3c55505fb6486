//! Authenticator data layout:
//! `rpIdHash[32] | flags[1] | signCount[4, BE] | attestedCredentialData? | extensions?`

use thiserror::Error;

use super::cbor::{decode_prefix, CborError, CborValue};
use super::cose::{CoseError, CosePublicKey};

pub const MIN_AUTH_DATA_LEN: usize = 37;

pub const FLAG_UP: u8 = 0x01;
pub const FLAG_UV: u8 = 0x04;
pub const FLAG_AT: u8 = 0x40;
pub const FLAG_ED: u8 = 0x80;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AuthDataError {
    #[error("authenticator data is {0} bytes, need at least {MIN_AUTH_DATA_LEN}")]
    TooShort(usize),
    #[error("malformed attested credential data: {0}")]
    MalformedCredentialData(&'static str),
    #[error("malformed credential public key: {0}")]
    PublicKey(#[from] CoseError),
    #[error("malformed extensions: {0}")]
    Extensions(CborError),
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthenticatorFlags(pub u8);

impl AuthenticatorFlags {
    pub fn user_present(self) -> bool {
        self.0 & FLAG_UP != 0
    }

    pub fn user_verified(self) -> bool {
        self.0 & FLAG_UV != 0
    }

    pub fn attested_credential(self) -> bool {
        self.0 & FLAG_AT != 0
    }

    pub fn extension_data(self) -> bool {
        self.0 & FLAG_ED != 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttestedCredential {
    pub aaguid: [u8; 16],
    pub credential_id: Vec<u8>,
    pub public_key: CosePublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthenticatorData {
    pub rp_id_hash: [u8; 32],
    pub flags: AuthenticatorFlags,
    pub counter: u32,
    pub attested_credential: Option<AttestedCredential>,
    /// Extension map, kept uninterpreted.
    pub extensions: Option<CborValue>,
    pub raw: Vec<u8>,
}

pub fn parse_authenticator_data(bytes: &[u8]) -> Result<AuthenticatorData, AuthDataError> {
    if bytes.len() < MIN_AUTH_DATA_LEN {
        return Err(AuthDataError::TooShort(bytes.len()));
    }
    let rp_id_hash: [u8; 32] = bytes[..32].try_into().unwrap();
    let flags = AuthenticatorFlags(bytes[32]);
    let counter = u32::from_be_bytes(bytes[33..37].try_into().unwrap());
    let mut rest = &bytes[37..];

    let attested_credential = if flags.attested_credential() {
        if rest.len() < 18 {
            return Err(AuthDataError::MalformedCredentialData(
                "missing aaguid or credential id length",
            ));
        }
        let aaguid: [u8; 16] = rest[..16].try_into().unwrap();
        let id_len = u16::from_be_bytes([rest[16], rest[17]]) as usize;
        rest = &rest[18..];
        if id_len == 0 || rest.len() < id_len {
            return Err(AuthDataError::MalformedCredentialData(
                "credential id length",
            ));
        }
        let credential_id = rest[..id_len].to_vec();
        rest = &rest[id_len..];
        let (key, used) = decode_prefix(rest)
            .map_err(|_| AuthDataError::MalformedCredentialData("public key is not CBOR"))?;
        rest = &rest[used..];
        Some(AttestedCredential {
            aaguid,
            credential_id,
            public_key: CosePublicKey::from_cbor(&key)?,
        })
    } else {
        None
    };

    let extensions = if flags.extension_data() {
        let (ext, used) = decode_prefix(rest).map_err(AuthDataError::Extensions)?;
        rest = &rest[used..];
        Some(ext)
    } else {
        None
    };

    if !rest.is_empty() {
        return Err(AuthDataError::TrailingBytes(rest.len()));
    }

    Ok(AuthenticatorData {
        rp_id_hash,
        flags,
        counter,
        attested_credential,
        extensions,
        raw: bytes.to_vec(),
    })
}
