//! Header and frame round-trip suite, shared by the `wire` and
//! `acceptance` targets. Each check panics on failure.

use proptest::prelude::*;
use proptest::test_runner::TestRunner;

use super::runner_config;
use quicsim_core::wire::*;

pub fn long_type() -> impl Strategy<Value = LongType> {
    prop_oneof![
        Just(LongType::VersionNegotiation),
        Just(LongType::ClientInitial),
        Just(LongType::Handshake),
        Just(LongType::ZeroRttProtected),
    ]
}

pub fn packet_number() -> impl Strategy<Value = u64> {
    prop_oneof![0u64..=0xff, 0x100u64..=0xffff, 0x1_0000u64..=0xffff_ffff]
}

pub fn header() -> impl Strategy<Value = QuicHeader> {
    prop_oneof![
        (long_type(), any::<u64>(), any::<u32>(), packet_number()).prop_map(|(t, c, v, pn)| {
            QuicHeader::Long {
                long_type: t,
                connection_id: ConnectionId(c),
                version: v,
                packet_number: pn,
            }
        }),
        (proptest::option::of(any::<u64>()), packet_number()).prop_map(|(c, pn)| {
            QuicHeader::Short {
                connection_id: c.map(ConnectionId),
                packet_number: pn,
            }
        }),
    ]
}

pub fn ack() -> impl Strategy<Value = AckFrame> {
    (
        proptest::collection::btree_set(0u64..5000, 1..60),
        any::<u32>(),
    )
        .prop_map(|(pns, delay)| AckFrame::from_packet_numbers(&pns, delay).unwrap())
}

/// Any frame except padding, whose runs merge when adjacent.
pub fn body_frame() -> impl Strategy<Value = Frame> {
    prop_oneof![
        (
            any::<u32>(),
            0u64..(1 << 62),
            any::<bool>(),
            proptest::collection::vec(any::<u8>(), 0..300)
        )
            .prop_map(|(id, offset, fin, data)| Frame::Stream(StreamFrame {
                stream_id: StreamId(id),
                offset,
                fin,
                data
            })),
        ack().prop_map(Frame::Ack),
        proptest::collection::vec(any::<u32>(), 0..12)
            .prop_map(|versions| Frame::VersionNegotiation { versions }),
        (any::<u16>(), proptest::collection::vec(any::<u8>(), 0..64))
            .prop_map(|(error_code, reason)| Frame::ConnectionClose { error_code, reason }),
        any::<u64>().prop_map(|maximum| Frame::MaxData { maximum }),
        (any::<u32>(), any::<u64>()).prop_map(|(id, maximum)| Frame::MaxStreamData {
            stream_id: StreamId(id),
            maximum
        }),
    ]
}

pub fn frame() -> impl Strategy<Value = Frame> {
    prop_oneof![1 => (1usize..200).prop_map(|length| Frame::Padding { length }), 6 => body_frame()]
}

pub fn packet() -> impl Strategy<Value = QuicPacket> {
    (
        header(),
        proptest::collection::vec(body_frame(), 1..6),
        proptest::option::of(1usize..64),
    )
        .prop_map(|(h, mut frames, pad)| {
            let hl = h.encoded_len().unwrap();
            let mut size = hl;
            frames.retain(|f| {
                let fits = size + f.encoded_len() <= MAX_PACKET_SIZE;
                if fits {
                    size += f.encoded_len();
                }
                fits
            });
            if frames.is_empty() {
                frames.push(Frame::MaxData { maximum: 1 });
                size += 9;
            }
            if let Some(p) = pad {
                let p = p.min(MAX_PACKET_SIZE - size);
                if p > 0 {
                    frames.push(Frame::Padding { length: p });
                }
            }
            QuicPacket::new(h, frames)
        })
}

pub fn header_round_trip(cases: u32) {
    TestRunner::new(runner_config(cases))
        .run(&header(), |h| {
            let bytes = h.encode().unwrap();
            prop_assert_eq!(bytes.len(), h.encoded_len().unwrap());
            match h {
                QuicHeader::Long { .. } => prop_assert_eq!(bytes.len(), LONG_HEADER_LEN),
                QuicHeader::Short { .. } => {
                    prop_assert!((2..=MAX_SHORT_HEADER_LEN).contains(&bytes.len()))
                }
            }
            let (back, used) = QuicHeader::parse(&bytes).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(back, h);
            Ok(())
        })
        .unwrap();
}

pub fn frame_round_trip(cases: u32) {
    TestRunner::new(runner_config(cases))
        .run(&frame(), |f| {
            let bytes = f.encode().unwrap();
            prop_assert_eq!(bytes.len(), f.encoded_len());
            prop_assert_eq!(parse_frames(&bytes).unwrap(), vec![f]);
            Ok(())
        })
        .unwrap();
}

pub fn packet_round_trip(cases: u32) {
    TestRunner::new(runner_config(cases))
        .run(&packet(), |p| {
            let bytes = p.encode().unwrap();
            prop_assert!(bytes.len() <= MAX_PACKET_SIZE);
            prop_assert_eq!(bytes.len(), p.encoded_len().unwrap());
            prop_assert_eq!(QuicPacket::decode(&bytes).unwrap(), p);
            Ok(())
        })
        .unwrap();
}

pub fn header_size_bounds() {
    let long = QuicHeader::Long {
        long_type: LongType::Handshake,
        connection_id: ConnectionId(u64::MAX),
        version: QUIC_VERSION_E,
        packet_number: u32::MAX as u64,
    };
    assert_eq!(long.encode().unwrap().len(), 17);
    let smallest = QuicHeader::Short {
        connection_id: None,
        packet_number: 0,
    };
    let largest = QuicHeader::Short {
        connection_id: Some(ConnectionId(1)),
        packet_number: 0x1_0000,
    };
    assert_eq!(smallest.encode().unwrap().len(), 2);
    assert_eq!(largest.encode().unwrap().len(), 13);
    let too_big = QuicHeader::Short {
        connection_id: None,
        packet_number: 1 << 32,
    };
    assert!(too_big.encode().is_err());
}
