use super::*;

fn rid(s: &str) -> ResourceId {
    ResourceId::new(s).unwrap()
}

fn plain_codec() -> Codec {
    Codec::new(CodecConfig::plain())
}

#[test]
fn bare_id_round_trips_without_delimiter() {
    let codec = Codec::default();
    let xid = ExtendedResourceId::bare(rid("srv/db-7"));
    let text = codec
        .encode_extended_id(&xid, &ElisionContext::new())
        .unwrap();
    assert_eq!(text, "srv/db-7");
    let back = codec
        .decode_extended_id(&text, &ElisionContext::new())
        .unwrap();
    assert_eq!(back, xid);
}

#[test]
fn id_with_delimiter_is_rejected() {
    assert_eq!(
        ResourceId::new("a#b").unwrap_err(),
        CodecError::IdContainsDelimiter
    );
    assert_eq!(
        ResourceId::new("").unwrap_err(),
        CodecError::EmptyResourceId
    );
}

#[test]
fn wire_layout_matches_hand_assembled_bytes() {
    // Plain chain so the appendix bytes are predictable: 3-byte header,
    // then one status TLV with the canonical JSON.
    let codec = plain_codec();
    let mut status = StatusRecord::new();
    status.set("load", 0.5);
    let json = status.to_canonical_json().unwrap();
    assert_eq!(json, r#"{"load":0.5}"#);

    let capsule = codec
        .northwise(None, Some(SegmentSlot::Present(json.clone().into_bytes())))
        .unwrap();
    let xid = ExtendedResourceId {
        id: rid("db-7"),
        capsule: Some(capsule),
    };
    let text = codec
        .encode_extended_id(&xid, &ElisionContext::new())
        .unwrap();

    let (id_part, appendix) = text.split_once('#').unwrap();
    assert_eq!(id_part, "db-7");
    let wire = URL_SAFE_NO_PAD.decode(appendix).unwrap();
    let mut expected = vec![0x01, 0x01, 0x00, 0x11, 0x00, json.len() as u8];
    expected.extend_from_slice(json.as_bytes());
    assert_eq!(wire, expected);
}

#[test]
fn default_chain_round_trips_blueprint_status_and_direction() {
    let codec = Codec::default();
    let bp = b"scheme dvfs { }".to_vec();
    let mut status = StatusRecord::new();
    status.set("f", 3.0).set("watts", 250.0);
    let st = status.to_canonical_json().unwrap().into_bytes();

    let capsule = codec
        .northwise(
            Some(SegmentSlot::Present(bp.clone())),
            Some(SegmentSlot::Present(st.clone())),
        )
        .unwrap();
    assert!(capsule.header.flags.blueprint_compressed);
    assert!(capsule.header.flags.status_compressed);
    assert!(!capsule.header.flags.encrypted);

    let xid = ExtendedResourceId {
        id: rid("cpu-core-017"),
        capsule: Some(capsule),
    };
    let text = codec
        .encode_extended_id(&xid, &ElisionContext::new())
        .unwrap();
    assert!(text.starts_with("cpu-core-017#"));
    let back = codec
        .decode_extended_id(&text, &ElisionContext::new())
        .unwrap();
    assert_eq!(back, xid);
}

#[test]
fn southwise_round_trips_tweaks() {
    let codec = Codec::default();
    let tweaks = vec![br#"{"scheme":"dvfs"}"#.to_vec(), Vec::new()];
    let capsule = codec.southwise(None, tweaks.clone()).unwrap();
    let xid = ExtendedResourceId {
        id: rid("cpu-core-017"),
        capsule: Some(capsule),
    };
    let text = codec
        .encode_extended_id(&xid, &ElisionContext::new())
        .unwrap();
    let back = codec
        .decode_extended_id(&text, &ElisionContext::new())
        .unwrap();
    assert_eq!(back.capsule.unwrap().tweaks, tweaks);
}

#[test]
fn repeated_segment_is_elided_and_rehydrated() {
    let codec = Codec::default();
    let bp = b"scheme dvfs { param f : [1, 3]; }".to_vec();
    let capsule = codec
        .northwise(Some(SegmentSlot::Present(bp.clone())), None)
        .unwrap();
    let xid = ExtendedResourceId {
        id: rid("core"),
        capsule: Some(capsule.clone()),
    };

    let mut sender_ctx = ElisionContext::new();
    let first = codec.encode_extended_id(&xid, &sender_ctx).unwrap();
    sender_ctx.absorb(&capsule);
    let second = codec.encode_extended_id(&xid, &sender_ctx).unwrap();
    assert!(second.len() < first.len());

    // The second wire form carries a zero-length blueprint TLV.
    let wire = URL_SAFE_NO_PAD
        .decode(second.split_once('#').unwrap().1)
        .unwrap();
    assert_eq!(&wire[3..], &[0x10, 0x00, 0x00]);

    let mut receiver_ctx = ElisionContext::new();
    let got_first = codec.decode_extended_id(&first, &receiver_ctx).unwrap();
    receiver_ctx.absorb(got_first.capsule.as_ref().unwrap());
    let got_second = codec.decode_extended_id(&second, &receiver_ctx).unwrap();
    assert_eq!(
        got_second.capsule.unwrap().blueprint,
        Some(SegmentSlot::Present(bp))
    );
}

#[test]
fn elision_without_context_fails_on_both_sides() {
    let codec = Codec::default();
    let capsule = codec.northwise(Some(SegmentSlot::Elided), None).unwrap();
    let xid = ExtendedResourceId {
        id: rid("core"),
        capsule: Some(capsule),
    };
    assert_eq!(
        codec
            .encode_extended_id(&xid, &ElisionContext::new())
            .unwrap_err(),
        CodecError::ElisionWithoutContext
    );

    // Hand-built wire with a zero-length blueprint TLV, decoded cold.
    let wire = [0x01, 0x01, 0x00, 0x10, 0x00, 0x00];
    let text = format!("core#{}", URL_SAFE_NO_PAD.encode(wire));
    assert_eq!(
        plain_codec()
            .decode_extended_id(&text, &ElisionContext::new())
            .unwrap_err(),
        CodecError::ElisionWithoutContext
    );
}

#[test]
fn oversized_segment_is_a_hard_error_not_a_split() {
    let codec = Codec::default();
    let big = vec![b'x'; MAX_SEGMENT_LEN + 1];
    let capsule = codec
        .northwise(Some(SegmentSlot::Present(big)), None)
        .unwrap();
    let xid = ExtendedResourceId {
        id: rid("core"),
        capsule: Some(capsule),
    };
    assert_eq!(
        codec
            .encode_extended_id(&xid, &ElisionContext::new())
            .unwrap_err(),
        CodecError::SegmentTooLarge {
            len: MAX_SEGMENT_LEN + 1
        }
    );
}

#[test]
fn incompressible_segment_that_overflows_post_transform_is_length_overflow() {
    // 65535 random-ish bytes stay legal as a segment but exceed the u16
    // length field once zlib adds its framing.
    let codec = Codec::default();
    let mut data = Vec::with_capacity(MAX_SEGMENT_LEN);
    let mut x = 0x9e3779b9u32;
    for _ in 0..MAX_SEGMENT_LEN {
        x ^= x << 13;
        x ^= x >> 17;
        x ^= x << 5;
        data.push(x as u8);
    }
    let capsule = codec
        .northwise(Some(SegmentSlot::Present(data)), None)
        .unwrap();
    let xid = ExtendedResourceId {
        id: rid("core"),
        capsule: Some(capsule),
    };
    assert!(matches!(
        codec.encode_extended_id(&xid, &ElisionContext::new()),
        Err(CodecError::LengthOverflow { .. })
    ));
}

#[test]
fn joint_encoding_clears_per_segment_flags_and_round_trips() {
    let codec = Codec::new(CodecConfig {
        chain: vec![PayloadTransform::Compress],
        joint: true,
    });
    let capsule = codec
        .northwise(
            Some(SegmentSlot::Present(b"scheme a { }".to_vec())),
            Some(SegmentSlot::Present(br#"{"f":1}"#.to_vec())),
        )
        .unwrap();
    assert!(capsule.header.flags.joint_encoding);
    assert!(!capsule.header.flags.blueprint_compressed);
    assert!(!capsule.header.flags.status_compressed);

    let xid = ExtendedResourceId {
        id: rid("core"),
        capsule: Some(capsule),
    };
    let text = codec
        .encode_extended_id(&xid, &ElisionContext::new())
        .unwrap();
    let back = codec
        .decode_extended_id(&text, &ElisionContext::new())
        .unwrap();
    assert_eq!(back, xid);
}

#[test]
fn decoding_with_a_different_chain_is_transform_mismatch() {
    let codec = Codec::default();
    let capsule = codec
        .northwise(Some(SegmentSlot::Present(b"scheme a { }".to_vec())), None)
        .unwrap();
    let xid = ExtendedResourceId {
        id: rid("core"),
        capsule: Some(capsule),
    };
    let text = codec
        .encode_extended_id(&xid, &ElisionContext::new())
        .unwrap();
    assert_eq!(
        plain_codec()
            .decode_extended_id(&text, &ElisionContext::new())
            .unwrap_err(),
        CodecError::TransformMismatch
    );
}

#[test]
fn wrong_key_is_corrupt_payload() {
    let seal = |key: &[u8]| {
        Codec::new(CodecConfig {
            chain: vec![
                PayloadTransform::Compress,
                PayloadTransform::KeyedTransform(key.to_vec()),
            ],
            joint: false,
        })
    };
    let a = seal(b"key-a");
    let capsule = a
        .northwise(Some(SegmentSlot::Present(b"scheme a { }".to_vec())), None)
        .unwrap();
    assert!(capsule.header.flags.encrypted);
    let xid = ExtendedResourceId {
        id: rid("core"),
        capsule: Some(capsule),
    };
    let text = a.encode_extended_id(&xid, &ElisionContext::new()).unwrap();
    assert!(matches!(
        seal(b"key-b").decode_extended_id(&text, &ElisionContext::new()),
        Err(CodecError::CorruptPayload(_))
    ));
}

#[test]
fn direction_rules_are_enforced_at_construction() {
    let codec = Codec::default();
    // Northwise never carries tweaks; the builder has no tweak input, so
    // check the underlying rule directly.
    let mut capsule = codec
        .northwise(Some(SegmentSlot::Present(b"bp".to_vec())), None)
        .unwrap();
    capsule.tweaks.push(b"t".to_vec());
    assert!(matches!(
        capsule.validate(),
        Err(CodecError::InvalidCapsule(_))
    ));

    let mut capsule = codec.southwise(None, vec![b"t".to_vec()]).unwrap();
    capsule.blueprint = Some(SegmentSlot::Present(b"bp".to_vec()));
    assert!(matches!(
        capsule.validate(),
        Err(CodecError::InvalidCapsule(_))
    ));

    assert!(matches!(
        codec.northwise(None, None),
        Err(CodecError::InvalidCapsule(_))
    ));
    assert!(matches!(
        codec.southwise(None, Vec::new()),
        Err(CodecError::InvalidCapsule(_))
    ));
}

#[test]
fn southwise_wire_with_blueprint_is_malformed() {
    // Direction octet says southwise, but a blueprint TLV follows.
    let mut wire = vec![0x02, 0x01, 0x00];
    wire.extend_from_slice(&[0x10, 0x00, 0x02, b'b', b'p']);
    let text = format!("core#{}", URL_SAFE_NO_PAD.encode(wire));
    assert!(matches!(
        plain_codec().decode_extended_id(&text, &ElisionContext::new()),
        Err(CodecError::MalformedAppendix(_))
    ));
}

#[test]
fn unknown_version_and_flag_bits_are_rejected() {
    let wire = [0x01, 0x02, 0x00, 0x11, 0x00, 0x01, b'x'];
    let text = format!("core#{}", URL_SAFE_NO_PAD.encode(wire));
    assert_eq!(
        plain_codec()
            .decode_extended_id(&text, &ElisionContext::new())
            .unwrap_err(),
        CodecError::UnknownVersion(2)
    );

    let wire = [0x01, 0x01, 0x80, 0x11, 0x00, 0x01, b'x'];
    let text = format!("core#{}", URL_SAFE_NO_PAD.encode(wire));
    assert!(matches!(
        plain_codec().decode_extended_id(&text, &ElisionContext::new()),
        Err(CodecError::MalformedAppendix(_))
    ));
}

#[test]
fn non_canonical_segment_order_is_rejected() {
    // status before blueprint
    let mut wire = vec![0x01, 0x01, 0x00];
    wire.extend_from_slice(&[0x11, 0x00, 0x01, b's']);
    wire.extend_from_slice(&[0x10, 0x00, 0x01, b'b']);
    let text = format!("core#{}", URL_SAFE_NO_PAD.encode(wire));
    assert!(matches!(
        plain_codec().decode_extended_id(&text, &ElisionContext::new()),
        Err(CodecError::MalformedAppendix(_))
    ));

    // duplicated blueprint
    let mut wire = vec![0x01, 0x01, 0x00];
    wire.extend_from_slice(&[0x10, 0x00, 0x01, b'b']);
    wire.extend_from_slice(&[0x10, 0x00, 0x01, b'b']);
    let text = format!("core#{}", URL_SAFE_NO_PAD.encode(wire));
    assert!(matches!(
        plain_codec().decode_extended_id(&text, &ElisionContext::new()),
        Err(CodecError::MalformedAppendix(_))
    ));
}

#[test]
fn padded_base64_and_garbage_are_malformed() {
    for text in ["core#AQEA==", "core#!!!", "core#"] {
        assert!(matches!(
            plain_codec().decode_extended_id(text, &ElisionContext::new()),
            Err(CodecError::MalformedAppendix(_))
        ));
    }
}

#[test]
fn truncated_tlv_inside_appendix_surfaces_as_truncated_stream() {
    let wire = [0x01, 0x01, 0x00, 0x11, 0x00];
    let text = format!("core#{}", URL_SAFE_NO_PAD.encode(wire));
    assert_eq!(
        plain_codec()
            .decode_extended_id(&text, &ElisionContext::new())
            .unwrap_err(),
        CodecError::TruncatedStream
    );
}

#[test]
fn status_record_json_is_key_sorted_and_typed() {
    let mut st = StatusRecord::new();
    st.set("watts", 146.5).set("f", 1.0).set("mode", "eco");
    assert_eq!(
        st.to_canonical_json().unwrap(),
        r#"{"f":1.0,"mode":"eco","watts":146.5}"#
    );
    let back = StatusRecord::from_json(r#"{"f":1.0,"mode":"eco","watts":146.5}"#).unwrap();
    assert_eq!(back, st);

    let mut bad = StatusRecord::new();
    bad.set("x", f64::NAN);
    assert!(matches!(
        bad.to_canonical_json(),
        Err(CodecError::InvalidStatus(_))
    ));
}

#[test]
fn empty_segment_payload_is_rejected() {
    let codec = plain_codec();
    assert!(matches!(
        codec.northwise(Some(SegmentSlot::Present(Vec::new())), None),
        Err(CodecError::InvalidCapsule(_))
    ));
}
