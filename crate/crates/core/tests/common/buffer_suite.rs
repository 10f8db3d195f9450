//! Send- and receive-buffer suites, shared by the `buffers` and
//! `acceptance` targets. Each check panics on failure.

use std::collections::BTreeSet;

use proptest::prelude::*;
use proptest::test_runner::TestRunner;

use super::runner_config;
use quicsim_core::buffers::*;
use quicsim_core::congestion::LossRule;
use quicsim_core::sim::SimTime;
use quicsim_core::wire::{AckFrame, Frame, StreamFrame, StreamId, STREAM_FRAME_OVERHEAD};

fn stream(id: u32, offset: u64, len: usize) -> Frame {
    Frame::Stream(StreamFrame {
        stream_id: StreamId(id),
        offset,
        fin: false,
        data: vec![id as u8; len],
    })
}

fn ack(pns: &[u64]) -> AckFrame {
    AckFrame::from_packet_numbers(&pns.iter().copied().collect(), 0).unwrap()
}

fn t(ms: u64) -> SimTime {
    SimTime::from_millis(ms)
}

fn sent_offsets(frames: &[Frame]) -> Vec<(u32, u64, usize)> {
    frames
        .iter()
        .filter_map(|f| match f {
            Frame::Stream(s) => Some((s.stream_id.0, s.offset, s.data.len())),
            _ => None,
        })
        .collect()
}

// ---- tx buffers ----

pub fn tx_socket_insertion_and_rejection_at_capacity() {
    let mut b = SocketTxBuffer::new(10_000);
    assert!(b.add(stream(1, 0, 8000), false));
    assert_eq!(b.available(), 2000);
    assert!(!b.add(stream(1, 8000, 3000), false));
    assert_eq!(
        b.buffered(),
        8000,
        "a rejected frame leaves the buffer untouched"
    );
    assert!(b.add(stream(1, 8000, 2000), false));
    assert_eq!(b.available(), 0);
    assert!(!b.add(stream(1, 10_000, 1), false));
}

pub fn tx_socket_capacity_includes_unacked_data() {
    let mut b = SocketTxBuffer::new(4000);
    assert!(b.add(stream(1, 0, 3000), false));
    let frames = b.next_packet(4000).unwrap();
    b.on_sent(0, frames, 3100, t(0), true).unwrap();
    assert_eq!(b.buffered(), 3000);
    assert!(!b.add(stream(1, 3000, 1500), false));
    b.on_ack(&ack(&[0]), &LossRule::default(), t(100)).unwrap();
    assert_eq!(b.buffered(), 0);
    assert!(b.add(stream(1, 3000, 1500), false));
}

pub fn tx_stream_insertion_and_rejection_at_capacity() {
    let mut s = StreamTxBuffer::new(1000);
    assert_eq!(s.write(&[1; 600]), 600);
    assert_eq!(s.write(&[2; 600]), 400, "partial acceptance up to capacity");
    assert_eq!(s.write(&[3; 10]), 0);
    assert_eq!(s.written(), 1000);
    let c = s.issue(300).unwrap();
    assert_eq!((c.offset, c.data.len()), (0, 300));
    assert_eq!(s.write(&[4; 500]), 300);
}

pub fn tx_socket_full_requeues_into_stream_at_original_offset() {
    let mut st = StreamTxBuffer::new(10_000);
    let mut sock = SocketTxBuffer::new(2500);
    st.write(&(0..=255u8).cycle().take(4000).collect::<Vec<_>>());
    let mut placed = Vec::new();
    while let Some(chunk) = st.issue(1000) {
        let frame = Frame::Stream(StreamFrame {
            stream_id: StreamId(1),
            offset: chunk.offset,
            fin: chunk.fin,
            data: chunk.data.clone(),
        });
        if !sock.add(frame, false) {
            let offset = chunk.offset;
            st.requeue(chunk).unwrap();
            let again = st.issue(1000).unwrap();
            assert_eq!(
                again.offset, offset,
                "requeued chunk comes back at the same offset"
            );
            assert_eq!(again.data[0], (offset % 256) as u8);
            st.requeue(again).unwrap();
            break;
        }
        placed.push(chunk.offset);
    }
    assert_eq!(placed, vec![0, 1000]);
    assert_eq!(st.buffered(), 2000);
    assert!(st
        .requeue(StreamChunk {
            offset: 2500,
            data: vec![0; 10],
            fin: false
        })
        .is_err());
}

pub fn tx_retransmission_requeue_with_fresh_packet_numbers() {
    let mut b = SocketTxBuffer::new(100_000);
    for k in 0..6 {
        assert!(b.add(stream(1, k * 1000, 1000), false));
    }
    for pn in 0..6 {
        let frames = b.next_packet(1000 + STREAM_FRAME_OVERHEAD).unwrap();
        b.on_sent(pn, frames, 1030, t(pn), true).unwrap();
    }
    // 0..=5 sent; 1 is missing from an ACK of {0, 2, 3, 4, 5}
    let out = b
        .on_ack(&ack(&[0, 2, 3, 4, 5]), &LossRule::default(), t(100))
        .unwrap();
    assert_eq!(
        out.lost.iter().map(|p| p.packet_number).collect::<Vec<_>>(),
        vec![1]
    );
    assert_eq!(b.prepare_retransmissions(), 1);
    let again = b.next_packet(2000).unwrap();
    assert_eq!(sent_offsets(&again), vec![(1, 1000, 1000)]);
    assert!(
        b.on_sent(5, again.clone(), 1030, t(101), true).is_err(),
        "packet numbers are never reused"
    );
    b.on_sent(6, again, 1030, t(101), true).unwrap();
    let out = b.on_ack(&ack(&[6]), &LossRule::default(), t(200)).unwrap();
    assert_eq!(out.acked.len(), 1);
    assert_eq!(b.buffered(), 0);
    assert_eq!(b.bytes_in_flight(), 0);
    assert!(!b.has_outstanding());
}

pub fn tx_duplicate_ack_is_idempotent() {
    let mut b = SocketTxBuffer::new(100_000);
    b.add(stream(1, 0, 500), false);
    let f = b.next_packet(2000).unwrap();
    b.on_sent(0, f, 530, t(0), true).unwrap();
    let first = b.on_ack(&ack(&[0]), &LossRule::default(), t(50)).unwrap();
    let second = b.on_ack(&ack(&[0]), &LossRule::default(), t(60)).unwrap();
    assert_eq!(first.acked.len(), 1);
    assert!(
        second.acked.is_empty() && second.lost.is_empty() && second.largest_newly_acked.is_none()
    );
    assert_eq!(b.prepare_retransmissions(), 0);
}

pub fn tx_fin_chunk_carries_final_offset() {
    let mut s = StreamTxBuffer::new(1000);
    s.write(&[7; 250]);
    s.finish();
    assert_eq!(s.write(&[1]), 0, "no writes after finish");
    let c = s.issue(100).unwrap();
    assert!(!c.fin);
    let c = s.issue(1000).unwrap();
    assert_eq!((c.offset, c.data.len(), c.fin), (100, 150, true));
    assert!(s.issue(1000).is_none());
}

// ---- rx buffers ----

pub fn rx_out_of_order_reassembly() {
    let data: Vec<u8> = (0..3000u32).map(|i| (i % 251) as u8).collect();
    let mut r = StreamRxBuffer::new(64 * 1024);
    assert!(r.insert(2000, &data[2000..], false).unwrap().is_empty());
    assert!(r.insert(1000, &data[1000..2000], false).unwrap().is_empty());
    assert_eq!(r.next_expected(), 0);
    let out = r.insert(0, &data[..1000], false).unwrap();
    assert_eq!(out, data, "everything releases once the gap fills");
    assert_eq!(r.next_expected(), 3000);
}

pub fn rx_duplicates_and_overlaps_keep_first_bytes() {
    let mut r = StreamRxBuffer::new(10_000);
    assert!(r.insert(10, &[1; 10], false).unwrap().is_empty());
    assert!(r.insert(15, &[2; 10], false).unwrap().is_empty());
    let out = r.insert(0, &[3; 12], false).unwrap();
    let mut want = vec![3; 10];
    want.extend([1; 10]);
    want.extend([2; 5]);
    assert_eq!(out, want);
    assert!(
        r.insert(0, &[9; 25], false).unwrap().is_empty(),
        "already delivered"
    );
}

pub fn rx_fin_length_accounting() {
    let mut r = StreamRxBuffer::new(10_000);
    assert!(r.insert(500, &[1; 500], true).unwrap().is_empty());
    assert_eq!(r.final_size(), Some(1000));
    assert!(!r.is_complete());
    assert!(matches!(
        r.insert(900, &[0; 200], false),
        Err(BufferError::DataBeyondFin { .. })
    ));
    assert!(matches!(
        r.insert(0, &[0; 10], true),
        Err(BufferError::FinMismatch { .. })
    ));
    assert_eq!(r.insert(0, &[0; 500], false).unwrap().len(), 1000);
    assert!(r.is_complete());
    let mut empty = StreamRxBuffer::new(100);
    assert!(empty.insert(0, &[], true).unwrap().is_empty());
    assert!(empty.is_complete());
}

pub fn rx_insertion_and_rejection_at_capacity() {
    let mut r = StreamRxBuffer::new(1000);
    assert!(r.insert(100, &[0; 900], false).is_ok());
    assert!(matches!(
        r.insert(2000, &[0; 101], false),
        Err(BufferError::Capacity { .. })
    ));
    let mut s = SocketRxBuffer::new(1000);
    s.push(StreamId(1), vec![0; 600]).unwrap();
    assert!(s.push(StreamId(2), vec![0; 401]).is_err());
    s.push(StreamId(2), vec![0; 400]).unwrap();
    assert_eq!(s.pop().unwrap().0, StreamId(1));
    assert_eq!(s.occupancy(), 400);
}

// ---- properties ----

/// Any arrival order, with duplicates, reassembles the original bytes.
pub fn rx_any_order_reassembles(cases: u32) {
    let strategy = (
        proptest::collection::btree_set(1usize..4000, 0..30),
        proptest::collection::vec(any::<prop::sample::Index>(), 1..80),
    );
    TestRunner::new(runner_config(cases))
        .run(&strategy, |(cuts, order)| {
            let data: Vec<u8> = (0..4000u32).map(|i| (i * 7 % 253) as u8).collect();
            let mut bounds: Vec<usize> = vec![0];
            bounds.extend(cuts);
            bounds.push(4000);
            let pieces: Vec<(usize, usize)> = bounds.windows(2).map(|w| (w[0], w[1])).collect();
            let mut r = StreamRxBuffer::new(8000);
            let mut out = Vec::new();
            let mut feed = |i: usize, out: &mut Vec<u8>| {
                let (a, b) = pieces[i];
                out.extend(r.insert(a as u64, &data[a..b], b == 4000).unwrap());
            };
            for ix in &order {
                feed(ix.index(pieces.len()), &mut out);
            }
            for i in 0..pieces.len() {
                feed(i, &mut out);
            }
            prop_assert_eq!(out, data);
            prop_assert!(r.is_complete());
            Ok(())
        })
        .unwrap();
}

/// Buffered and in-flight counters agree with a recount after any mix
/// of sends, ACKs and losses.
pub fn tx_counters_match_recount(cases: u32) {
    let strategy = (
        proptest::collection::vec(1usize..3000, 1..40),
        proptest::collection::btree_set(0u64..60, 0..40),
    );
    TestRunner::new(runner_config(cases))
        .run(&strategy, |(sizes, acked)| {
            let mut b = SocketTxBuffer::new(1 << 20);
            let mut off = 0u64;
            for s in &sizes {
                prop_assert!(b.add(stream(1, off, *s), false));
                off += *s as u64;
            }
            let mut pn = 0;
            while let Some(frames) = b.next_packet(1460) {
                let size: usize = frames.iter().map(Frame::encoded_len).sum::<usize>() + 10;
                b.on_sent(pn, frames, size, t(pn), true).unwrap();
                pn += 1;
            }
            let acked: BTreeSet<u64> = acked.into_iter().filter(|p| *p < pn).collect();
            if let Some(a) = AckFrame::from_packet_numbers(&acked, 0) {
                b.on_ack(&a, &LossRule::default(), t(1000)).unwrap();
            }
            prop_assert_eq!(b.bytes_in_flight(), b.recount_in_flight());
            prop_assert_eq!(b.buffered(), b.recount_buffered());
            b.prepare_retransmissions();
            prop_assert_eq!(b.buffered(), b.recount_buffered());
            let total: usize = sizes.iter().sum();
            let acked_bytes: usize = total - b.buffered();
            prop_assert!(acked_bytes <= total);
            Ok(())
        })
        .unwrap();
}
