//! Capsule codec: piggybacks protocol payloads on resource names.
//!
//! An extended resource ID is the UTF-8 name itself, optionally followed
//! by `#` and a base64url appendix. The appendix is a 3-byte header
//! (direction, version, flags) followed by a TLV stream carrying up to
//! one blueprint segment, up to one status segment (in that order), and
//! any number of tweak payloads. Components that merely relay a name
//! never need to look past the `#`.
//!
//! Segments repeated verbatim on a pathway are elided: a zero-length
//! segment TLV tells the receiver to reuse the last value it saw for the
//! same (sender, receiver) pair, tracked in an [`ElisionContext`].

mod tlv;
mod transform;

use std::collections::BTreeMap;
use std::fmt;

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tlv::{envelope_tlv, parse_tlv_stream, TlvType, MAX_TLV_LEN};
pub use transform::{apply_transforms, invert_transforms, PayloadTransform};

/// Segments above this many bytes are a hard error. There is no
/// chunking: one segment, one TLV.
pub const MAX_SEGMENT_LEN: usize = MAX_TLV_LEN;

const VERSION: u8 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("resource id is empty")]
    EmptyResourceId,
    #[error("resource id contains the '#' delimiter")]
    IdContainsDelimiter,
    #[error("segment of {len} bytes exceeds the {MAX_SEGMENT_LEN}-byte ceiling")]
    SegmentTooLarge { len: usize },
    #[error("TLV value of {len} bytes overflows the u16 length field")]
    LengthOverflow { len: usize },
    #[error("TLV stream truncated")]
    TruncatedStream,
    #[error("unknown TLV type 0x{0:02x}")]
    UnknownTlvType(u8),
    #[error("unsupported capsule version {0}")]
    UnknownVersion(u8),
    #[error("malformed appendix: {0}")]
    MalformedAppendix(String),
    #[error("elided segment without a prior value for this pathway")]
    ElisionWithoutContext,
    #[error("payload did not invert cleanly: {0}")]
    CorruptPayload(String),
    #[error("capsule flags disagree with the configured transform chain")]
    TransformMismatch,
    #[error("invalid capsule: {0}")]
    InvalidCapsule(String),
    #[error("invalid status record: {0}")]
    InvalidStatus(String),
}

/// A bare resource name: non-empty UTF-8 with no `#`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ResourceId(String);

impl ResourceId {
    pub fn new(s: impl Into<String>) -> Result<Self, CodecError> {
        let s = s.into();
        if s.is_empty() {
            return Err(CodecError::EmptyResourceId);
        }
        if s.contains('#') {
            return Err(CodecError::IdContainsDelimiter);
        }
        Ok(ResourceId(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for ResourceId {
    type Error = CodecError;
    fn try_from(s: String) -> Result<Self, CodecError> {
        ResourceId::new(s)
    }
}

impl From<ResourceId> for String {
    fn from(id: ResourceId) -> String {
        id.0
    }
}

/// Which way a capsule travels: north = toward the application,
/// south = toward the hardware.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Northwise,
    Southwise,
}

impl Direction {
    fn octet(self) -> u8 {
        match self {
            Direction::Northwise => 0x01,
            Direction::Southwise => 0x02,
        }
    }

    fn from_octet(b: u8) -> Result<Self, CodecError> {
        match b {
            0x01 => Ok(Direction::Northwise),
            0x02 => Ok(Direction::Southwise),
            other => Err(CodecError::MalformedAppendix(format!(
                "unknown direction octet 0x{other:02x}"
            ))),
        }
    }
}

const FLAG_BLUEPRINT_COMPRESSED: u8 = 0x01;
const FLAG_STATUS_COMPRESSED: u8 = 0x02;
const FLAG_ENCRYPTED: u8 = 0x04;
const FLAG_JOINT_ENCODING: u8 = 0x08;

/// Wire flags recording which transforms the segments went through.
/// `joint_encoding` means the whole TLV stream was transformed as one
/// blob, in which case the per-segment compression flags stay clear.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CapsuleFlags {
    pub blueprint_compressed: bool,
    pub status_compressed: bool,
    pub encrypted: bool,
    pub joint_encoding: bool,
}

impl CapsuleFlags {
    pub fn octet(self) -> u8 {
        let mut b = 0u8;
        if self.blueprint_compressed {
            b |= FLAG_BLUEPRINT_COMPRESSED;
        }
        if self.status_compressed {
            b |= FLAG_STATUS_COMPRESSED;
        }
        if self.encrypted {
            b |= FLAG_ENCRYPTED;
        }
        if self.joint_encoding {
            b |= FLAG_JOINT_ENCODING;
        }
        b
    }

    pub fn from_octet(b: u8) -> Result<Self, CodecError> {
        if b & 0xf0 != 0 {
            return Err(CodecError::MalformedAppendix(format!(
                "unknown flag bits 0x{b:02x}"
            )));
        }
        let flags = CapsuleFlags {
            blueprint_compressed: b & FLAG_BLUEPRINT_COMPRESSED != 0,
            status_compressed: b & FLAG_STATUS_COMPRESSED != 0,
            encrypted: b & FLAG_ENCRYPTED != 0,
            joint_encoding: b & FLAG_JOINT_ENCODING != 0,
        };
        if flags.joint_encoding && (flags.blueprint_compressed || flags.status_compressed) {
            return Err(CodecError::MalformedAppendix(
                "joint encoding with per-segment compression flags".into(),
            ));
        }
        Ok(flags)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapsuleHeader {
    pub direction: Direction,
    pub version: u8,
    pub flags: CapsuleFlags,
}

/// A segment as carried in a capsule: either the bytes themselves or a
/// marker that the receiver should reuse the previous value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SegmentSlot {
    Present(Vec<u8>),
    Elided,
}

impl SegmentSlot {
    pub fn present(&self) -> Option<&[u8]> {
        match self {
            SegmentSlot::Present(b) => Some(b),
            SegmentSlot::Elided => None,
        }
    }
}

/// One scalar in a status record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StatusValue {
    Num(f64),
    Text(String),
}

impl From<f64> for StatusValue {
    fn from(v: f64) -> Self {
        StatusValue::Num(v)
    }
}

impl From<&str> for StatusValue {
    fn from(v: &str) -> Self {
        StatusValue::Text(v.to_string())
    }
}

/// Ordered parameter-name -> scalar map; the canonical form is
/// key-sorted JSON, which is what travels in a status segment.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StatusRecord(pub BTreeMap<String, StatusValue>);

impl StatusRecord {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: impl Into<String>, value: impl Into<StatusValue>) -> &mut Self {
        self.0.insert(name.into(), value.into());
        self
    }

    pub fn get(&self, name: &str) -> Option<&StatusValue> {
        self.0.get(name)
    }

    pub fn to_canonical_json(&self) -> Result<String, CodecError> {
        for (k, v) in &self.0 {
            if let StatusValue::Num(n) = v {
                if !n.is_finite() {
                    return Err(CodecError::InvalidStatus(format!(
                        "non-finite value for {k}"
                    )));
                }
            }
        }
        serde_json::to_string(&self.0).map_err(|e| CodecError::InvalidStatus(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, CodecError> {
        serde_json::from_str(text).map_err(|e| CodecError::InvalidStatus(e.to_string()))
    }
}

/// The unit that travels on a name: blueprint and/or status northwise,
/// status and/or tweaks southwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Capsule {
    pub header: CapsuleHeader,
    pub blueprint: Option<SegmentSlot>,
    pub status: Option<SegmentSlot>,
    pub tweaks: Vec<Vec<u8>>,
}

impl Capsule {
    pub fn direction(&self) -> Direction {
        self.header.direction
    }

    /// Structural rules that hold regardless of transform configuration.
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.header.version != VERSION {
            return Err(CodecError::UnknownVersion(self.header.version));
        }
        match self.header.direction {
            Direction::Northwise if !self.tweaks.is_empty() => {
                return Err(CodecError::InvalidCapsule(
                    "northwise capsules carry no tweaks".into(),
                ))
            }
            Direction::Southwise if self.blueprint.is_some() => {
                return Err(CodecError::InvalidCapsule(
                    "southwise capsules carry no blueprint segment".into(),
                ))
            }
            _ => {}
        }
        if self.blueprint.is_none() && self.status.is_none() && self.tweaks.is_empty() {
            return Err(CodecError::InvalidCapsule(
                "empty capsule; encode a bare id instead".into(),
            ));
        }
        // A zero-length TLV is the elision marker, so an empty segment
        // payload has no wire representation. Omit the segment instead.
        for slot in [&self.blueprint, &self.status].into_iter().flatten() {
            if matches!(slot, SegmentSlot::Present(b) if b.is_empty()) {
                return Err(CodecError::InvalidCapsule(
                    "segment payloads must be non-empty".into(),
                ));
            }
        }
        Ok(())
    }
}

/// A resource name plus its optional capsule.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedResourceId {
    pub id: ResourceId,
    pub capsule: Option<Capsule>,
}

impl ExtendedResourceId {
    pub fn bare(id: ResourceId) -> Self {
        ExtendedResourceId { id, capsule: None }
    }
}

/// Last segment values exchanged on one (sender, receiver) pathway.
/// Both ends keep one of these per direction and feed every capsule
/// through [`ElisionContext::absorb`]; elided segments are only legal
/// against a context that has seen the segment before.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ElisionContext {
    last_blueprint: Option<Vec<u8>>,
    last_status: Option<Vec<u8>>,
}

impl ElisionContext {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records the Present segments of a sent or received capsule.
    pub fn absorb(&mut self, capsule: &Capsule) {
        if let Some(SegmentSlot::Present(b)) = &capsule.blueprint {
            self.last_blueprint = Some(b.clone());
        }
        if let Some(SegmentSlot::Present(b)) = &capsule.status {
            self.last_status = Some(b.clone());
        }
    }

    pub fn last_blueprint(&self) -> Option<&[u8]> {
        self.last_blueprint.as_deref()
    }

    pub fn last_status(&self) -> Option<&[u8]> {
        self.last_status.as_deref()
    }
}

/// Transform configuration shared by both ends of a pathway.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecConfig {
    pub chain: Vec<PayloadTransform>,
    /// Transform the concatenated TLV stream as one blob instead of each
    /// payload separately.
    pub joint: bool,
}

impl Default for CodecConfig {
    fn default() -> Self {
        CodecConfig {
            chain: vec![PayloadTransform::Compress],
            joint: false,
        }
    }
}

impl CodecConfig {
    pub fn plain() -> Self {
        CodecConfig {
            chain: Vec::new(),
            joint: false,
        }
    }

    fn has_compress(&self) -> bool {
        self.chain
            .iter()
            .any(|t| matches!(t, PayloadTransform::Compress))
    }

    fn has_keyed(&self) -> bool {
        self.chain
            .iter()
            .any(|t| matches!(t, PayloadTransform::KeyedTransform(_)))
    }
}

/// Encoder/decoder for one transform configuration. All methods are pure
/// in (input, context, config); callers own the context bookkeeping.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Codec {
    pub config: CodecConfig,
}

impl Codec {
    pub fn new(config: CodecConfig) -> Self {
        Codec { config }
    }

    fn derived_flags(&self, has_blueprint: bool, has_status: bool) -> CapsuleFlags {
        let per_segment = self.config.has_compress() && !self.config.joint;
        CapsuleFlags {
            blueprint_compressed: per_segment && has_blueprint,
            status_compressed: per_segment && has_status,
            encrypted: self.config.has_keyed(),
            joint_encoding: self.config.joint,
        }
    }

    /// Builds a northwise capsule whose flags match this codec.
    pub fn northwise(
        &self,
        blueprint: Option<SegmentSlot>,
        status: Option<SegmentSlot>,
    ) -> Result<Capsule, CodecError> {
        let capsule = Capsule {
            header: CapsuleHeader {
                direction: Direction::Northwise,
                version: VERSION,
                flags: self.derived_flags(blueprint.is_some(), status.is_some()),
            },
            blueprint,
            status,
            tweaks: Vec::new(),
        };
        capsule.validate()?;
        Ok(capsule)
    }

    /// Builds a southwise capsule whose flags match this codec.
    pub fn southwise(
        &self,
        status: Option<SegmentSlot>,
        tweaks: Vec<Vec<u8>>,
    ) -> Result<Capsule, CodecError> {
        let capsule = Capsule {
            header: CapsuleHeader {
                direction: Direction::Southwise,
                version: VERSION,
                flags: self.derived_flags(false, status.is_some()),
            },
            blueprint: None,
            status,
            tweaks,
        };
        capsule.validate()?;
        Ok(capsule)
    }

    /// Renders an extended ID. The bytes before `#` are exactly the bare
    /// id; no capsule means no `#` at all.
    pub fn encode_extended_id(
        &self,
        xid: &ExtendedResourceId,
        ctx: &ElisionContext,
    ) -> Result<String, CodecError> {
        let capsule = match &xid.capsule {
            None => return Ok(xid.id.as_str().to_string()),
            Some(c) => c,
        };
        capsule.validate()?;
        let expected = self.derived_flags(capsule.blueprint.is_some(), capsule.status.is_some());
        if capsule.header.flags != expected {
            return Err(CodecError::TransformMismatch);
        }

        let mut stream = Vec::new();
        if let Some(slot) = &capsule.blueprint {
            self.put_segment(TlvType::Blueprint, slot, ctx.last_blueprint(), &mut stream)?;
        }
        if let Some(slot) = &capsule.status {
            self.put_segment(TlvType::Status, slot, ctx.last_status(), &mut stream)?;
        }
        for tweak in &capsule.tweaks {
            if tweak.len() > MAX_SEGMENT_LEN {
                return Err(CodecError::SegmentTooLarge { len: tweak.len() });
            }
            let value = if self.config.joint {
                tweak.clone()
            } else {
                apply_transforms(&self.config.chain, tweak)?
            };
            envelope_tlv(TlvType::Tweak, &value, &mut stream)?;
        }

        let body = if self.config.joint {
            apply_transforms(&self.config.chain, &stream)?
        } else {
            stream
        };
        let mut wire = Vec::with_capacity(3 + body.len());
        wire.push(capsule.header.direction.octet());
        wire.push(capsule.header.version);
        wire.push(capsule.header.flags.octet());
        wire.extend_from_slice(&body);
        Ok(format!("{}#{}", xid.id, URL_SAFE_NO_PAD.encode(wire)))
    }

    fn put_segment(
        &self,
        ty: TlvType,
        slot: &SegmentSlot,
        last: Option<&[u8]>,
        out: &mut Vec<u8>,
    ) -> Result<(), CodecError> {
        match slot {
            SegmentSlot::Present(bytes) => {
                if bytes.len() > MAX_SEGMENT_LEN {
                    return Err(CodecError::SegmentTooLarge { len: bytes.len() });
                }
                // Elision compares plaintext, before any transform.
                if last == Some(bytes.as_slice()) {
                    return envelope_tlv(ty, &[], out);
                }
                let value = if self.config.joint {
                    bytes.clone()
                } else {
                    apply_transforms(&self.config.chain, bytes)?
                };
                envelope_tlv(ty, &value, out)
            }
            SegmentSlot::Elided => {
                if last.is_none() {
                    return Err(CodecError::ElisionWithoutContext);
                }
                envelope_tlv(ty, &[], out)
            }
        }
    }

    /// Parses an extended ID. Elided segments come back `Present`, filled
    /// from `ctx`; the caller then absorbs the result into its context.
    pub fn decode_extended_id(
        &self,
        text: &str,
        ctx: &ElisionContext,
    ) -> Result<ExtendedResourceId, CodecError> {
        let (id_part, appendix) = match text.split_once('#') {
            None => return Ok(ExtendedResourceId::bare(ResourceId::new(text)?)),
            Some(parts) => parts,
        };
        let id = ResourceId::new(id_part)?;
        if appendix.is_empty() {
            return Err(CodecError::MalformedAppendix("empty appendix".into()));
        }
        let wire = URL_SAFE_NO_PAD
            .decode(appendix)
            .map_err(|e| CodecError::MalformedAppendix(format!("base64: {e}")))?;
        if wire.len() < 3 {
            return Err(CodecError::MalformedAppendix(
                "header shorter than 3 bytes".into(),
            ));
        }
        let direction = Direction::from_octet(wire[0])?;
        if wire[1] != VERSION {
            return Err(CodecError::UnknownVersion(wire[1]));
        }
        let flags = CapsuleFlags::from_octet(wire[2])?;
        if flags.joint_encoding != self.config.joint || flags.encrypted != self.config.has_keyed() {
            return Err(CodecError::TransformMismatch);
        }

        let body = if self.config.joint {
            invert_transforms(&self.config.chain, &wire[3..])?
        } else {
            wire[3..].to_vec()
        };
        let items = parse_tlv_stream(&body)?;

        // Canonical order: blueprint?, status?, tweak*.
        let mut blueprint_raw: Option<Vec<u8>> = None;
        let mut status_raw: Option<Vec<u8>> = None;
        let mut tweaks_raw: Vec<Vec<u8>> = Vec::new();
        let mut stage = 0u8;
        for (ty, value) in items {
            let (min_stage, next_stage) = match ty {
                TlvType::Blueprint => (0, 1),
                TlvType::Status => (1, 2),
                TlvType::Tweak => (2, 2),
            };
            if stage > min_stage {
                return Err(CodecError::MalformedAppendix(
                    "segments out of canonical order or duplicated".into(),
                ));
            }
            stage = next_stage.max(stage.max(min_stage));
            match ty {
                TlvType::Blueprint => blueprint_raw = Some(value),
                TlvType::Status => status_raw = Some(value),
                TlvType::Tweak => tweaks_raw.push(value),
            }
        }

        let expected = self.derived_flags(blueprint_raw.is_some(), status_raw.is_some());
        if flags != expected {
            return Err(CodecError::TransformMismatch);
        }

        let blueprint = blueprint_raw
            .map(|raw| self.take_segment(raw, ctx.last_blueprint()))
            .transpose()?;
        let status = status_raw
            .map(|raw| self.take_segment(raw, ctx.last_status()))
            .transpose()?;
        let tweaks = tweaks_raw
            .into_iter()
            .map(|raw| {
                if self.config.joint {
                    Ok(raw)
                } else {
                    invert_transforms(&self.config.chain, &raw)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;

        let capsule = Capsule {
            header: CapsuleHeader {
                direction,
                version: VERSION,
                flags,
            },
            blueprint,
            status,
            tweaks,
        };
        capsule
            .validate()
            .map_err(|e| CodecError::MalformedAppendix(e.to_string()))?;
        Ok(ExtendedResourceId {
            id,
            capsule: Some(capsule),
        })
    }

    fn take_segment(&self, raw: Vec<u8>, last: Option<&[u8]>) -> Result<SegmentSlot, CodecError> {
        if raw.is_empty() {
            return match last {
                // Zero length on a segment TLV means "same as before".
                Some(prev) => Ok(SegmentSlot::Present(prev.to_vec())),
                None => Err(CodecError::ElisionWithoutContext),
            };
        }
        let plain = if self.config.joint {
            raw
        } else {
            invert_transforms(&self.config.chain, &raw)?
        };
        Ok(SegmentSlot::Present(plain))
    }
}

#[cfg(test)]
mod tests;
