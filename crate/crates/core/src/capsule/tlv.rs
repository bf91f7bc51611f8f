//! Type-length-value envelope for capsule payloads.
//!
//! One item is: type octet, big-endian u16 length, value bytes. A zero
//! length is legal and carries no value bytes; what it means (elided
//! segment vs. empty payload) is decided a layer up.

use super::CodecError;

/// Payload types admitted on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TlvType {
    Blueprint,
    Status,
    Tweak,
}

impl TlvType {
    pub fn from_octet(octet: u8) -> Result<Self, CodecError> {
        match octet {
            0x10 => Ok(TlvType::Blueprint),
            0x11 => Ok(TlvType::Status),
            0x20 => Ok(TlvType::Tweak),
            other => Err(CodecError::UnknownTlvType(other)),
        }
    }

    pub fn octet(self) -> u8 {
        match self {
            TlvType::Blueprint => 0x10,
            TlvType::Status => 0x11,
            TlvType::Tweak => 0x20,
        }
    }
}

/// Hard ceiling on a single TLV value. There is no chunking: anything
/// larger is an error, never a split.
pub const MAX_TLV_LEN: usize = u16::MAX as usize;

/// Appends one TLV item to `out`.
pub fn envelope_tlv(ty: TlvType, value: &[u8], out: &mut Vec<u8>) -> Result<(), CodecError> {
    if value.len() > MAX_TLV_LEN {
        return Err(CodecError::LengthOverflow { len: value.len() });
    }
    out.push(ty.octet());
    out.extend_from_slice(&(value.len() as u16).to_be_bytes());
    out.extend_from_slice(value);
    Ok(())
}

/// Parses a complete TLV stream. Every byte must be accounted for: a
/// header or value running past the end of `bytes` is `TruncatedStream`.
pub fn parse_tlv_stream(bytes: &[u8]) -> Result<Vec<(TlvType, Vec<u8>)>, CodecError> {
    let mut items = Vec::new();
    let mut at = 0usize;
    while at < bytes.len() {
        if bytes.len() - at < 3 {
            return Err(CodecError::TruncatedStream);
        }
        let ty = TlvType::from_octet(bytes[at])?;
        let len = u16::from_be_bytes([bytes[at + 1], bytes[at + 2]]) as usize;
        at += 3;
        if bytes.len() - at < len {
            return Err(CodecError::TruncatedStream);
        }
        items.push((ty, bytes[at..at + len].to_vec()));
        at += len;
    }
    Ok(items)
}
