//! Reversible payload transforms.
//!
//! A transform chain is applied left to right on encode and inverted
//! right to left on decode. Every step is exactly invertible; a payload
//! that does not invert cleanly is `CorruptPayload`, never a silent
//! partial result.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use super::CodecError;

/// Keyed payloads carry this many tag bytes ahead of the plaintext so a
/// wrong key is detected instead of yielding garbage.
const TAG_LEN: usize = 8;

/// One reversible transform step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayloadTransform {
    Identity,
    /// zlib (deterministic for a fixed input and level).
    Compress,
    /// Keyed obfuscation with an integrity tag. Deliberately not real
    /// cryptography; it models sealing and makes key mismatch loud.
    KeyedTransform(Vec<u8>),
}

pub fn apply_transforms(chain: &[PayloadTransform], payload: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut data = payload.to_vec();
    for step in chain {
        data = match step {
            PayloadTransform::Identity => data,
            PayloadTransform::Compress => compress(&data)?,
            PayloadTransform::KeyedTransform(key) => keyed_apply(key, &data),
        };
    }
    Ok(data)
}

pub fn invert_transforms(
    chain: &[PayloadTransform],
    payload: &[u8],
) -> Result<Vec<u8>, CodecError> {
    let mut data = payload.to_vec();
    for step in chain.iter().rev() {
        data = match step {
            PayloadTransform::Identity => data,
            PayloadTransform::Compress => decompress(&data)?,
            PayloadTransform::KeyedTransform(key) => keyed_invert(key, &data)?,
        };
    }
    Ok(data)
}

fn compress(data: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut enc = flate2::write::ZlibEncoder::new(Vec::new(), flate2::Compression::new(6));
    enc.write_all(data)
        .and_then(|_| enc.finish())
        .map_err(|e| CodecError::CorruptPayload(format!("compress: {e}")))
}

fn decompress(data: &[u8]) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    flate2::read::ZlibDecoder::new(data)
        .read_to_end(&mut out)
        .map_err(|e| CodecError::CorruptPayload(format!("decompress: {e}")))?;
    Ok(out)
}

/// Output layout: xor-keystream(tag || plaintext), tag = first 8 bytes
/// of SHA-256(key || plaintext).
fn keyed_apply(key: &[u8], plain: &[u8]) -> Vec<u8> {
    let mut body = Vec::with_capacity(TAG_LEN + plain.len());
    body.extend_from_slice(&tag_for(key, plain));
    body.extend_from_slice(plain);
    xor_keystream(key, &mut body);
    body
}

fn keyed_invert(key: &[u8], sealed: &[u8]) -> Result<Vec<u8>, CodecError> {
    if sealed.len() < TAG_LEN {
        return Err(CodecError::CorruptPayload("keyed payload too short".into()));
    }
    let mut body = sealed.to_vec();
    xor_keystream(key, &mut body);
    let (tag, plain) = body.split_at(TAG_LEN);
    if tag != tag_for(key, plain) {
        return Err(CodecError::CorruptPayload(
            "keyed payload tag mismatch".into(),
        ));
    }
    Ok(plain.to_vec())
}

fn tag_for(key: &[u8], plain: &[u8]) -> [u8; TAG_LEN] {
    let mut h = Sha256::new();
    h.update(key);
    h.update(plain);
    let digest = h.finalize();
    let mut tag = [0u8; TAG_LEN];
    tag.copy_from_slice(&digest[..TAG_LEN]);
    tag
}

fn xor_keystream(key: &[u8], data: &mut [u8]) {
    let mut block = [0u8; 32];
    for (i, chunk) in data.chunks_mut(32).enumerate() {
        let mut h = Sha256::new();
        h.update(key);
        h.update((i as u64).to_le_bytes());
        block.copy_from_slice(&h.finalize());
        for (b, k) in chunk.iter_mut().zip(block.iter()) {
            *b ^= k;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_round_trip() {
        let chain = [PayloadTransform::Identity];
        let out = apply_transforms(&chain, b"payload").unwrap();
        assert_eq!(out, b"payload");
        assert_eq!(invert_transforms(&chain, &out).unwrap(), b"payload");
    }

    #[test]
    fn compress_round_trips_and_shrinks_repetitive_input() {
        let chain = [PayloadTransform::Compress];
        let blueprint: Vec<u8> = b"param freq_step : {1, 1.5, 2, 2.5, 3} [GHz];\n"
            .iter()
            .cycle()
            .take(10 * 1024)
            .copied()
            .collect();
        let packed = apply_transforms(&chain, &blueprint).unwrap();
        assert!(packed.len() < blueprint.len());
        assert_eq!(invert_transforms(&chain, &packed).unwrap(), blueprint);
    }

    #[test]
    fn keyed_round_trips_and_rejects_wrong_key() {
        let chain = [PayloadTransform::KeyedTransform(b"key-a".to_vec())];
        let sealed = apply_transforms(&chain, b"tune it down").unwrap();
        assert_eq!(invert_transforms(&chain, &sealed).unwrap(), b"tune it down");

        let wrong = [PayloadTransform::KeyedTransform(b"key-b".to_vec())];
        assert!(matches!(
            invert_transforms(&wrong, &sealed),
            Err(CodecError::CorruptPayload(_))
        ));
    }

    #[test]
    fn keyed_rejects_bit_flip() {
        let chain = [PayloadTransform::KeyedTransform(b"key-a".to_vec())];
        let mut sealed = apply_transforms(&chain, b"tune it down").unwrap();
        sealed[TAG_LEN + 2] ^= 0x04;
        assert!(matches!(
            invert_transforms(&chain, &sealed),
            Err(CodecError::CorruptPayload(_))
        ));
    }

    #[test]
    fn chain_inverts_in_reverse_order() {
        let chain = [
            PayloadTransform::Compress,
            PayloadTransform::KeyedTransform(b"k".to_vec()),
        ];
        let data = b"a longer payload that compresses a little bit bit bit bit";
        let out = apply_transforms(&chain, data).unwrap();
        assert_eq!(invert_transforms(&chain, &out).unwrap(), data.to_vec());
    }

    #[test]
    fn empty_payload_round_trips_through_every_step() {
        for chain in [
            vec![PayloadTransform::Identity],
            vec![PayloadTransform::Compress],
            vec![PayloadTransform::KeyedTransform(b"k".to_vec())],
        ] {
            let out = apply_transforms(&chain, b"").unwrap();
            assert_eq!(invert_transforms(&chain, &out).unwrap(), Vec::<u8>::new());
        }
    }

    #[test]
    fn corrupt_zlib_stream_is_corrupt_payload() {
        let chain = [PayloadTransform::Compress];
        assert!(matches!(
            invert_transforms(&chain, &[0x00, 0x01, 0x02]),
            Err(CodecError::CorruptPayload(_))
        ));
    }
}
