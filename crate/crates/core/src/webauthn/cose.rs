//! ES256 COSE_Key (EC2 / P-256) handling.

use p256::ecdsa::VerifyingKey;
use p256::EncodedPoint;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::cbor::CborValue;
use crate::b64;

pub const COSE_ALG_ES256: i64 = -7;
pub const COSE_KTY_EC2: i64 = 2;
pub const COSE_CRV_P256: i64 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoseError {
    #[error("COSE key is not a map")]
    NotAMap,
    #[error("missing or mistyped COSE key field {0}")]
    MissingField(&'static str),
    #[error("unsupported key type {0}")]
    UnsupportedKeyType(i128),
    #[error("unsupported algorithm {0}")]
    UnsupportedAlgorithm(i128),
    #[error("unsupported curve {0}")]
    UnsupportedCurve(i128),
    #[error("coordinates are not a point on P-256")]
    InvalidPoint,
}

/// An ES256 public key: EC2 key type, P-256 curve, validated affine point.
#[derive(Clone, PartialEq, Eq)]
pub struct CosePublicKey {
    x: [u8; 32],
    y: [u8; 32],
}

impl CosePublicKey {
    pub fn from_coordinates(x: [u8; 32], y: [u8; 32]) -> Result<Self, CoseError> {
        let key = Self { x, y };
        key.verifying_key()?;
        Ok(key)
    }

    pub fn from_verifying_key(key: &VerifyingKey) -> Self {
        let point = key.to_encoded_point(false);
        Self {
            x: (*point.x().expect("uncompressed point")).into(),
            y: (*point.y().expect("uncompressed point")).into(),
        }
    }

    pub fn x(&self) -> &[u8; 32] {
        &self.x
    }

    pub fn y(&self) -> &[u8; 32] {
        &self.y
    }

    pub fn algorithm(&self) -> i64 {
        COSE_ALG_ES256
    }

    pub fn verifying_key(&self) -> Result<VerifyingKey, CoseError> {
        let point = EncodedPoint::from_affine_coordinates(&self.x.into(), &self.y.into(), false);
        VerifyingKey::from_encoded_point(&point).map_err(|_| CoseError::InvalidPoint)
    }

    pub fn from_cbor(value: &CborValue) -> Result<Self, CoseError> {
        if value.as_map().is_none() {
            return Err(CoseError::NotAMap);
        }
        let int = |label: i64, name| {
            value
                .get_int_key(label)
                .and_then(CborValue::as_integer)
                .ok_or(CoseError::MissingField(name))
        };
        let coord = |label: i64, name| -> Result<[u8; 32], CoseError> {
            value
                .get_int_key(label)
                .and_then(CborValue::as_bytes)
                .and_then(|b| <[u8; 32]>::try_from(b).ok())
                .ok_or(CoseError::MissingField(name))
        };
        let kty = int(1, "kty")?;
        if kty != COSE_KTY_EC2 as i128 {
            return Err(CoseError::UnsupportedKeyType(kty));
        }
        let alg = int(3, "alg")?;
        if alg != COSE_ALG_ES256 as i128 {
            return Err(CoseError::UnsupportedAlgorithm(alg));
        }
        let crv = int(-1, "crv")?;
        if crv != COSE_CRV_P256 as i128 {
            return Err(CoseError::UnsupportedCurve(crv));
        }
        Self::from_coordinates(coord(-2, "x")?, coord(-3, "y")?)
    }

    /// The COSE_Key map in canonical (CTAP2) key order.
    pub fn to_cbor(&self) -> CborValue {
        CborValue::Map(vec![
            (CborValue::int(1), CborValue::int(COSE_KTY_EC2)),
            (CborValue::int(3), CborValue::int(COSE_ALG_ES256)),
            (CborValue::int(-1), CborValue::int(COSE_CRV_P256)),
            (CborValue::int(-2), CborValue::Bytes(self.x.to_vec())),
            (CborValue::int(-3), CborValue::Bytes(self.y.to_vec())),
        ])
    }
}

impl std::fmt::Debug for CosePublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CosePublicKey")
            .field("alg", &COSE_ALG_ES256)
            .field("x", &b64::encode(self.x))
            .field("y", &b64::encode(self.y))
            .finish()
    }
}

#[derive(Serialize, Deserialize)]
struct CoseKeyJson {
    kty: String,
    alg: i64,
    crv: String,
    x: String,
    y: String,
}

impl Serialize for CosePublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        CoseKeyJson {
            kty: "EC2".into(),
            alg: COSE_ALG_ES256,
            crv: "P-256".into(),
            x: b64::encode(self.x),
            y: b64::encode(self.y),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CosePublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let json = CoseKeyJson::deserialize(d)?;
        if json.kty != "EC2" || json.alg != COSE_ALG_ES256 || json.crv != "P-256" {
            return Err(D::Error::custom("only EC2/ES256/P-256 keys are supported"));
        }
        let coord = |s: &str| -> Result<[u8; 32], D::Error> {
            b64::decode(s)
                .ok()
                .and_then(|b| b.try_into().ok())
                .ok_or_else(|| D::Error::custom("coordinate must be 32 bytes"))
        };
        CosePublicKey::from_coordinates(coord(&json.x)?, coord(&json.y)?).map_err(D::Error::custom)
    }
}
