use serde::Deserialize;

use super::WebAuthnError;
use crate::b64;

pub const TYPE_CREATE: &str = "webauthn.create";
pub const TYPE_GET: &str = "webauthn.get";

/// Browser-produced client data; `raw` is kept for hashing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientData {
    pub ceremony_type: String,
    pub challenge: String,
    pub origin: String,
    pub cross_origin: bool,
    pub raw: Vec<u8>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct ClientDataJson {
    #[serde(rename = "type")]
    ceremony_type: String,
    challenge: String,
    origin: String,
    #[serde(default)]
    cross_origin: bool,
}

/// Parses client data and checks type, challenge and origin, in that order.
pub fn parse_client_data(
    json: &[u8],
    expected_type: &str,
    expected_challenge: &[u8],
    expected_origin: &str,
) -> Result<ClientData, WebAuthnError> {
    let text = std::str::from_utf8(json).map_err(|_| WebAuthnError::MalformedClientData)?;
    let parsed: ClientDataJson =
        serde_json::from_str(text).map_err(|_| WebAuthnError::MalformedClientData)?;
    if parsed.ceremony_type != expected_type {
        return Err(WebAuthnError::TypeMismatch);
    }
    if parsed.challenge != b64::encode(expected_challenge) {
        return Err(WebAuthnError::ChallengeMismatch);
    }
    if parsed.origin != expected_origin {
        return Err(WebAuthnError::OriginMismatch);
    }
    Ok(ClientData {
        ceremony_type: parsed.ceremony_type,
        challenge: parsed.challenge,
        origin: parsed.origin,
        cross_origin: parsed.cross_origin,
        raw: json.to_vec(),
    })
}
