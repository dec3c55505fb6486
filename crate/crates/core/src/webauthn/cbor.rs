//! Strict decoder for the CBOR subset used by WebAuthn: definite-length
//! integers, byte and text strings, arrays, maps, booleans and null.

use thiserror::Error;

/// Maximum nesting of arrays and maps.
pub const MAX_DEPTH: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CborValue {
    Unsigned(u64),
    /// Encodes the integer `-1 - n`.
    Negative(u64),
    Bytes(Vec<u8>),
    Text(String),
    Array(Vec<CborValue>),
    /// Entries in wire order; keys are unique.
    Map(Vec<(CborValue, CborValue)>),
    Bool(bool),
    Null,
}

impl CborValue {
    pub fn int(value: i64) -> Self {
        if value >= 0 {
            CborValue::Unsigned(value as u64)
        } else {
            CborValue::Negative((-1 - value) as u64)
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        CborValue::Text(s.into())
    }

    /// Integer value, if it fits in `i128` (all CBOR integers do).
    pub fn as_integer(&self) -> Option<i128> {
        match *self {
            CborValue::Unsigned(n) => Some(n as i128),
            CborValue::Negative(n) => Some(-1 - n as i128),
            _ => None,
        }
    }

    pub fn as_bytes(&self) -> Option<&[u8]> {
        match self {
            CborValue::Bytes(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            CborValue::Text(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_map(&self) -> Option<&[(CborValue, CborValue)]> {
        match self {
            CborValue::Map(m) => Some(m),
            _ => None,
        }
    }

    /// Looks up `key` in a map value.
    pub fn get(&self, key: &CborValue) -> Option<&CborValue> {
        self.as_map()?
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v)
    }

    pub fn get_text_key(&self, key: &str) -> Option<&CborValue> {
        self.get(&CborValue::text(key))
    }

    pub fn get_int_key(&self, key: i64) -> Option<&CborValue> {
        self.get(&CborValue::int(key))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CborError {
    #[error("empty input")]
    Empty,
    #[error("input ends inside an item")]
    Truncated,
    #[error("indefinite-length items are not supported")]
    IndefiniteLengthUnsupported,
    #[error("duplicate map key")]
    DuplicateMapKey,
    #[error("{0} trailing bytes after the top-level item")]
    TrailingBytes(usize),
    #[error("unsupported item (major type {major}, info {info})")]
    Unsupported { major: u8, info: u8 },
    #[error("reserved additional information value {0}")]
    Reserved(u8),
    #[error("text string is not valid UTF-8")]
    InvalidUtf8,
    #[error("nesting deeper than {MAX_DEPTH}")]
    DepthExceeded,
}

/// Decodes exactly one item that spans all of `input`.
pub fn decode_cbor(input: &[u8]) -> Result<CborValue, CborError> {
    if input.is_empty() {
        return Err(CborError::Empty);
    }
    let (value, used) = decode_prefix(input)?;
    match input.len() - used {
        0 => Ok(value),
        n => Err(CborError::TrailingBytes(n)),
    }
}

/// Decodes the first item of `input`, returning it and the bytes consumed.
pub fn decode_prefix(input: &[u8]) -> Result<(CborValue, usize), CborError> {
    if input.is_empty() {
        return Err(CborError::Empty);
    }
    let mut reader = Reader { input, pos: 0 };
    let value = reader.item(0)?;
    Ok((value, reader.pos))
}

struct Reader<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.input.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CborError> {
        if self.remaining() < n {
            return Err(CborError::Truncated);
        }
        let out = &self.input[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn byte(&mut self) -> Result<u8, CborError> {
        Ok(self.take(1)?[0])
    }

    fn argument(&mut self, major: u8, info: u8) -> Result<u64, CborError> {
        Ok(match info {
            0..=23 => u64::from(info),
            24 => u64::from(self.byte()?),
            25 => u64::from(u16::from_be_bytes(self.take(2)?.try_into().unwrap())),
            26 => u64::from(u32::from_be_bytes(self.take(4)?.try_into().unwrap())),
            27 => u64::from_be_bytes(self.take(8)?.try_into().unwrap()),
            28..=30 => return Err(CborError::Reserved(info)),
            _ => {
                return Err(if (2..=5).contains(&major) {
                    CborError::IndefiniteLengthUnsupported
                } else {
                    CborError::Unsupported { major, info }
                })
            }
        })
    }

    /// A length that must fit in what is left of the input, at `unit` bytes per element.
    fn length(&mut self, major: u8, info: u8, unit: usize) -> Result<usize, CborError> {
        let n = self.argument(major, info)?;
        let n = usize::try_from(n).map_err(|_| CborError::Truncated)?;
        if n.checked_mul(unit)
            .is_none_or(|need| need > self.remaining())
        {
            return Err(CborError::Truncated);
        }
        Ok(n)
    }

    fn item(&mut self, depth: usize) -> Result<CborValue, CborError> {
        let initial = self.byte()?;
        let major = initial >> 5;
        let info = initial & 0x1f;
        match major {
            0 => Ok(CborValue::Unsigned(self.argument(major, info)?)),
            1 => Ok(CborValue::Negative(self.argument(major, info)?)),
            2 => {
                let n = self.length(major, info, 1)?;
                Ok(CborValue::Bytes(self.take(n)?.to_vec()))
            }
            3 => {
                let n = self.length(major, info, 1)?;
                let raw = self.take(n)?;
                let text = std::str::from_utf8(raw).map_err(|_| CborError::InvalidUtf8)?;
                Ok(CborValue::Text(text.to_owned()))
            }
            4 => {
                if depth >= MAX_DEPTH {
                    return Err(CborError::DepthExceeded);
                }
                let n = self.length(major, info, 1)?;
                let mut items = Vec::with_capacity(n);
                for _ in 0..n {
                    items.push(self.item(depth + 1)?);
                }
                Ok(CborValue::Array(items))
            }
            5 => {
                if depth >= MAX_DEPTH {
                    return Err(CborError::DepthExceeded);
                }
                let n = self.length(major, info, 2)?;
                let mut entries: Vec<(CborValue, CborValue)> = Vec::with_capacity(n);
                for _ in 0..n {
                    let key = self.item(depth + 1)?;
                    if entries.iter().any(|(k, _)| *k == key) {
                        return Err(CborError::DuplicateMapKey);
                    }
                    let value = self.item(depth + 1)?;
                    entries.push((key, value));
                }
                Ok(CborValue::Map(entries))
            }
            7 => match info {
                20 => Ok(CborValue::Bool(false)),
                21 => Ok(CborValue::Bool(true)),
                22 => Ok(CborValue::Null),
                31 => Err(CborError::Unsupported { major, info }),
                _ => Err(CborError::Unsupported { major, info }),
            },
            // tags (6)
            _ => Err(CborError::Unsupported { major, info }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_item() {
        assert_eq!(decode_cbor(&[0x00]).unwrap(), CborValue::Unsigned(0));
    }

    #[test]
    fn single_entry_map() {
        // {"a": 1}, cross-checked with python cbor2.dumps({"a": 1})
        assert_eq!(
            decode_cbor(&[0xa1, 0x61, 0x61, 0x01]).unwrap(),
            CborValue::Map(vec![(CborValue::text("a"), CborValue::Unsigned(1))])
        );
    }

    #[test]
    fn trailing_bytes() {
        assert_eq!(decode_cbor(&[0x00, 0x00]), Err(CborError::TrailingBytes(1)));
        assert_eq!(
            decode_prefix(&[0x01, 0xff]).unwrap(),
            (CborValue::Unsigned(1), 1)
        );
    }

    #[test]
    fn integers() {
        assert_eq!(decode_cbor(&[0x17]).unwrap(), CborValue::Unsigned(23));
        assert_eq!(decode_cbor(&[0x18, 0x18]).unwrap(), CborValue::Unsigned(24));
        assert_eq!(
            decode_cbor(&[0x19, 0x01, 0x00]).unwrap(),
            CborValue::Unsigned(256)
        );
        assert_eq!(decode_cbor(&[0x20]).unwrap().as_integer(), Some(-1));
        assert_eq!(decode_cbor(&[0x26]).unwrap().as_integer(), Some(-7));
        assert_eq!(
            decode_cbor(&[0x3b, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff])
                .unwrap()
                .as_integer(),
            Some(-18_446_744_073_709_551_616)
        );
    }

    #[test]
    fn strings_and_simple_values() {
        assert_eq!(
            decode_cbor(&[0x43, 1, 2, 3]).unwrap(),
            CborValue::Bytes(vec![1, 2, 3])
        );
        assert_eq!(
            decode_cbor(&[0x62, 0xc3, 0xa9]).unwrap(),
            CborValue::text("é")
        );
        assert_eq!(
            decode_cbor(&[0x62, 0xc3, 0x28]),
            Err(CborError::InvalidUtf8)
        );
        assert_eq!(decode_cbor(&[0xf5]).unwrap(), CborValue::Bool(true));
        assert_eq!(decode_cbor(&[0xf6]).unwrap(), CborValue::Null);
    }

    #[test]
    fn rejects_truncation() {
        assert_eq!(decode_cbor(&[0x18]), Err(CborError::Truncated));
        assert_eq!(decode_cbor(&[0x43, 1, 2]), Err(CborError::Truncated));
        assert_eq!(decode_cbor(&[0x82, 0x01]), Err(CborError::Truncated));
        assert_eq!(decode_cbor(&[0xa1, 0x01]), Err(CborError::Truncated));
        // huge declared length must not allocate
        assert_eq!(
            decode_cbor(&[0x9b, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff, 0xff]),
            Err(CborError::Truncated)
        );
        assert_eq!(decode_cbor(&[]), Err(CborError::Empty));
    }

    #[test]
    fn rejects_indefinite_lengths() {
        for initial in [0x5f, 0x7f, 0x9f, 0xbf] {
            assert_eq!(
                decode_cbor(&[initial, 0xff]),
                Err(CborError::IndefiniteLengthUnsupported)
            );
        }
    }

    #[test]
    fn rejects_duplicate_keys() {
        assert_eq!(
            decode_cbor(&[0xa2, 0x01, 0x02, 0x01, 0x03]),
            Err(CborError::DuplicateMapKey)
        );
    }

    #[test]
    fn rejects_tags_floats_and_reserved() {
        assert!(matches!(
            decode_cbor(&[0xc0, 0x00]),
            Err(CborError::Unsupported { major: 6, .. })
        ));
        assert!(matches!(
            decode_cbor(&[0xf9, 0x3c, 0x00]),
            Err(CborError::Unsupported { major: 7, .. })
        ));
        assert_eq!(decode_cbor(&[0x1c]), Err(CborError::Reserved(28)));
    }

    #[test]
    fn depth_limit() {
        let mut deep = vec![0x81; MAX_DEPTH + 1];
        deep.push(0x00);
        assert_eq!(decode_cbor(&deep), Err(CborError::DepthExceeded));
        let mut ok = vec![0x81; MAX_DEPTH];
        ok.push(0x00);
        assert!(decode_cbor(&ok).is_ok());
    }
}
