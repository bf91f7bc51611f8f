//! Trusted-exchange broker for pathway initiation.
//!
//! A southern component that wants to open a pathway cannot hand its
//! session key to the far endpoint directly — everything between them
//! only relays opaque identifiers. Instead it deposits a sealed offer
//! at a broker both ends trust, addressed to a stack layer, and floats
//! the short-lived relay key northwise inside an ordinary status
//! segment. Whichever component holds the relay key *and* sits at the
//! addressed layer can claim the offer exactly once; the broker then
//! produces a notification for the depositor carrying the claimant's
//! return key, and both sides hold what they need to exchange sealed
//! capsules end to end.
//!
//! The broker checks, in order: the relay key is known, not yet
//! claimed, not expired, and the claimant's verified layer matches the
//! addressed layer; only then does the seal open. A relay key is
//! single-use forever: even after the offer is gone, re-depositing
//! under the same key is refused.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Mutex;

use thiserror::Error;

use crate::capsule::{
    apply_transforms, invert_transforms, PayloadTransform, ResourceId, StatusRecord, StatusValue,
};

/// Position of a component counted from the south end of the stack.
pub type LayerIndex = u32;

/// Status-segment field carrying the base64url relay key.
pub const OFFER_KEY_FIELD: &str = "relay_key";
/// Status-segment field carrying the addressed layer.
pub const OFFER_LAYER_FIELD: &str = "target_layer";

/// How long a deposit stays claimable, in seconds.
pub const DEFAULT_TTL: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TxError {
    #[error("relay key is not registered")]
    UnknownRelayKey,
    #[error("offer was already claimed")]
    AlreadyClaimed,
    #[error("offer expired: deposited {age} s ago with a ttl of {ttl} s")]
    Expired { age: f64, ttl: f64 },
    #[error("claimant layer {got:?} does not match addressed layer {expected}")]
    LayerMismatch {
        expected: LayerIndex,
        got: Option<LayerIndex>,
    },
    #[error("sealed offer did not open: {0}")]
    BadSeal(String),
    #[error("relay key was already used")]
    DuplicateRelayKey,
    #[error("invalid offer: {0}")]
    InvalidOffer(String),
}

/// Resolves a component's verified position in the stack. The broker
/// trusts this mapping, not the claimant's word.
pub trait LayerOracle {
    fn layer_of(&self, id: &ResourceId) -> Option<LayerIndex>;
}

impl LayerOracle for BTreeMap<ResourceId, LayerIndex> {
    fn layer_of(&self, id: &ResourceId) -> Option<LayerIndex> {
        self.get(id).copied()
    }
}

/// A sealed offer parked at the broker.
#[derive(Debug, Clone, PartialEq)]
pub struct Deposit {
    /// Single-use key the depositor floats northwise; also the seal key.
    pub relay_key: Vec<u8>,
    /// [`seal_offer`] output: the depositor's session key and blueprint
    /// capsule, openable only with the relay key.
    pub sealed: Vec<u8>,
    /// Layer whose occupant may claim this offer.
    pub target_layer: LayerIndex,
    /// Who to notify once the offer is claimed.
    pub depositor: ResourceId,
}

/// What a claimant presents.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimRequest {
    pub relay_key: Vec<u8>,
    /// The claimant's identity; its layer comes from the oracle.
    pub requester: ResourceId,
    /// Return key the depositor should use for traffic back south.
    pub south_key: Vec<u8>,
}

/// Broker-to-depositor message produced by a successful claim.
#[derive(Debug, Clone, PartialEq)]
pub struct SouthNotification {
    pub depositor: ResourceId,
    pub south_key: Vec<u8>,
}

/// What a successful claim yields.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimOutcome {
    /// The depositor's blueprint capsule, wire form.
    pub capsule_bytes: Vec<u8>,
    /// Session key for traffic toward the claimant.
    pub north_key: Vec<u8>,
    /// To be delivered to the depositor.
    pub notification: SouthNotification,
}

#[derive(Debug)]
struct Entry {
    sealed: Vec<u8>,
    target_layer: LayerIndex,
    depositor: ResourceId,
    deposited_at: f64,
}

#[derive(Debug, Default)]
struct Inner {
    live: BTreeMap<Vec<u8>, Entry>,
    consumed: BTreeSet<Vec<u8>>,
}

/// The broker. Clock-agnostic: callers pass their own monotone `now`.
#[derive(Debug)]
pub struct TxRegistry {
    ttl: f64,
    inner: Mutex<Inner>,
}

impl Default for TxRegistry {
    fn default() -> Self {
        TxRegistry::new(DEFAULT_TTL)
    }
}

impl TxRegistry {
    pub fn new(ttl: f64) -> Self {
        TxRegistry {
            ttl,
            inner: Mutex::new(Inner::default()),
        }
    }

    pub fn ttl(&self) -> f64 {
        self.ttl
    }

    /// Parks a sealed offer. Every relay key works at most once, ever —
    /// reusing one that is live *or* already consumed is refused.
    pub fn deposit(&self, now: f64, deposit: Deposit) -> Result<(), TxError> {
        if deposit.relay_key.is_empty() {
            return Err(TxError::InvalidOffer("relay key must not be empty".into()));
        }
        let mut inner = self.inner.lock().expect("broker lock poisoned");
        if inner.live.contains_key(&deposit.relay_key)
            || inner.consumed.contains(&deposit.relay_key)
        {
            return Err(TxError::DuplicateRelayKey);
        }
        inner.live.insert(
            deposit.relay_key,
            Entry {
                sealed: deposit.sealed,
                target_layer: deposit.target_layer,
                depositor: deposit.depositor,
                deposited_at: now,
            },
        );
        Ok(())
    }

    /// Hands over a parked offer if every check passes. A deposit that
    /// fails a check stays claimable (except by age); only a fully
    /// successful claim consumes the relay key.
    pub fn claim(
        &self,
        now: f64,
        request: &ClaimRequest,
        oracle: &dyn LayerOracle,
    ) -> Result<ClaimOutcome, TxError> {
        let mut inner = self.inner.lock().expect("broker lock poisoned");
        if !inner.live.contains_key(&request.relay_key) {
            if inner.consumed.contains(&request.relay_key) {
                return Err(TxError::AlreadyClaimed);
            }
            return Err(TxError::UnknownRelayKey);
        }
        let entry = &inner.live[&request.relay_key];
        let age = now - entry.deposited_at;
        if age > self.ttl {
            return Err(TxError::Expired { age, ttl: self.ttl });
        }
        let got = oracle.layer_of(&request.requester);
        if got != Some(entry.target_layer) {
            return Err(TxError::LayerMismatch {
                expected: entry.target_layer,
                got,
            });
        }
        let (north_key, capsule_bytes) = unseal_offer(&request.relay_key, &entry.sealed)?;
        let entry = inner
            .live
            .remove(&request.relay_key)
            .expect("checked above");
        inner.consumed.insert(request.relay_key.clone());
        Ok(ClaimOutcome {
            capsule_bytes,
            north_key,
            notification: SouthNotification {
                depositor: entry.depositor,
                south_key: request.south_key.clone(),
            },
        })
    }

    /// Number of offers currently parked.
    pub fn live_offers(&self) -> usize {
        self.inner.lock().expect("broker lock poisoned").live.len()
    }
}

/// Seals `(north_key, capsule_bytes)` under the relay key. Layout
/// before sealing: `u16 BE key length || key || capsule bytes`.
pub fn seal_offer(
    relay_key: &[u8],
    north_key: &[u8],
    capsule_bytes: &[u8],
) -> Result<Vec<u8>, TxError> {
    if relay_key.is_empty() {
        return Err(TxError::InvalidOffer("relay key must not be empty".into()));
    }
    if north_key.len() > u16::MAX as usize {
        return Err(TxError::InvalidOffer(format!(
            "session key of {} bytes exceeds {}",
            north_key.len(),
            u16::MAX
        )));
    }
    let mut plain = Vec::with_capacity(2 + north_key.len() + capsule_bytes.len());
    plain.extend_from_slice(&(north_key.len() as u16).to_be_bytes());
    plain.extend_from_slice(north_key);
    plain.extend_from_slice(capsule_bytes);
    apply_transforms(
        &[PayloadTransform::KeyedTransform(relay_key.to_vec())],
        &plain,
    )
    .map_err(|e| TxError::BadSeal(e.to_string()))
}

fn unseal_offer(relay_key: &[u8], sealed: &[u8]) -> Result<(Vec<u8>, Vec<u8>), TxError> {
    let plain = invert_transforms(
        &[PayloadTransform::KeyedTransform(relay_key.to_vec())],
        sealed,
    )
    .map_err(|e| TxError::BadSeal(e.to_string()))?;
    if plain.len() < 2 {
        return Err(TxError::BadSeal(
            "offer shorter than its length field".into(),
        ));
    }
    let key_len = u16::from_be_bytes([plain[0], plain[1]]) as usize;
    if plain.len() < 2 + key_len {
        return Err(TxError::BadSeal(format!(
            "offer claims a {key_len}-byte key but only {} bytes follow",
            plain.len() - 2
        )));
    }
    let north_key = plain[2..2 + key_len].to_vec();
    let capsule_bytes = plain[2 + key_len..].to_vec();
    Ok((north_key, capsule_bytes))
}

/// Builds the status segment a depositor floats northwise to advertise
/// the relay key.
pub fn offer_status(relay_key: &[u8], target_layer: LayerIndex) -> StatusRecord {
    use base64::Engine as _;
    let mut status = StatusRecord::new();
    status
        .set(
            OFFER_KEY_FIELD,
            StatusValue::Text(base64::engine::general_purpose::URL_SAFE_NO_PAD.encode(relay_key)),
        )
        .set(OFFER_LAYER_FIELD, StatusValue::Num(target_layer as f64));
    status
}

/// Reads an advertised relay key back out of a status segment, or
/// `None` when the segment does not carry a well-formed offer.
pub fn parse_offer(status: &StatusRecord) -> Option<(Vec<u8>, LayerIndex)> {
    use base64::Engine as _;
    let key = match status.get(OFFER_KEY_FIELD)? {
        StatusValue::Text(text) => base64::engine::general_purpose::URL_SAFE_NO_PAD
            .decode(text)
            .ok()?,
        StatusValue::Num(_) => return None,
    };
    let layer = match status.get(OFFER_LAYER_FIELD)? {
        StatusValue::Num(n) => {
            if !n.is_finite() || *n < 0.0 || n.fract() != 0.0 || *n > LayerIndex::MAX as f64 {
                return None;
            }
            *n as LayerIndex
        }
        StatusValue::Text(_) => return None,
    };
    Some((key, layer))
}
