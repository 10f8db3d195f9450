//! Congestion control: RTT estimation, loss rule, algorithm arithmetic and
//! closed-loop window invariants.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;

use proptest::prelude::*;
use quicsim_core::buffers::{AckOutcome, SentPacketInfo, SocketTxBuffer};
use quicsim_core::congestion::*;
use quicsim_core::sim::SimTime;
use quicsim_core::wire::{AckFrame, Frame, StreamFrame, StreamId};

fn ms(v: u64) -> Duration {
    Duration::from_millis(v)
}

// ---- RTT estimation ----

#[test]
fn rtt_first_sample() {
    let mut r = RttEstimator::new();
    r.update(ms(100), Duration::ZERO);
    assert_eq!((r.srtt(), r.rttvar(), r.rto()), (ms(100), ms(50), ms(300)));
}

#[test]
fn rtt_ack_delay_removed() {
    let mut r = RttEstimator::new();
    r.update(ms(100), Duration::ZERO);
    r.update(ms(120), ms(20));
    assert_eq!(r.latest(), ms(120));
    // adjusted = 100 ms, so the smoothed value does not move
    assert_eq!(r.srtt(), ms(100));
    assert_eq!(r.rttvar(), ms(50) * 3 / 4);
}

#[test]
fn rtt_ack_delay_clamps_at_min_rtt() {
    let mut r = RttEstimator::new();
    r.update(ms(100), Duration::ZERO);
    r.update(ms(110), ms(40));
    assert_eq!(r.srtt(), ms(100));
}

#[test]
fn rtt_sample_through_controller() {
    // a packet sent 120 ms ago, acknowledged with 20 ms of receiver delay
    let mut c = CongestionController::new(Box::new(NewReno), usize::MAX);
    let info = |pn, t| SentPacketInfo {
        packet_number: pn,
        size: MSS,
        sent_at: SimTime::from_millis(t),
        in_flight: true,
    };
    c.on_packet_sent(0, MSS, true, SimTime::ZERO);
    let out = AckOutcome {
        acked: vec![info(0, 0)],
        lost: vec![],
        largest_newly_acked: Some(info(0, 0)),
    };
    c.on_ack(&out, 0, Duration::ZERO, SimTime::from_millis(100));
    c.on_packet_sent(1, MSS, true, SimTime::from_millis(1000));
    let out = AckOutcome {
        acked: vec![info(1, 1000)],
        lost: vec![],
        largest_newly_acked: Some(info(1, 1000)),
    };
    c.on_ack(&out, 1, ms(20), SimTime::from_millis(1120));
    assert_eq!(c.state().rtt.latest(), ms(120));
    assert_eq!(c.state().rtt.srtt(), ms(100));
}

#[test]
fn rtt_converges_on_fixed_path() {
    let mut r = RttEstimator::new();
    for _ in 0..20 {
        r.update(ms(100), Duration::ZERO);
    }
    let err = (r.srtt().as_secs_f64() - 0.1).abs() / 0.1;
    assert!(err < 0.01, "srtt {:?}", r.srtt());
}

#[test]
fn rto_backoff_doubles_and_resets() {
    let mut r = RttEstimator::new();
    assert_eq!(r.rto(), INITIAL_RTO);
    r.update(ms(100), Duration::ZERO);
    let mut seen = vec![r.rto()];
    for _ in 0..3 {
        r.on_rto_fired();
        seen.push(r.rto());
    }
    assert_eq!(seen, vec![ms(300), ms(600), ms(1200), ms(2400)]);
    for _ in 0..20 {
        r.on_rto_fired();
    }
    assert_eq!(r.rto(), MAX_RTO);
    r.update(ms(100), Duration::ZERO);
    assert!(r.rto() < ms(400));
}

#[test]
fn rto_floor() {
    let mut r = RttEstimator::new();
    for _ in 0..50 {
        r.update(ms(5), Duration::ZERO);
    }
    assert_eq!(r.rto(), MIN_RTO);
}

// ---- algorithm arithmetic ----

fn state(cwnd: usize, ssthresh: usize) -> CongestionState {
    let mut s = CongestionState::new(ssthresh);
    s.cwnd = cwnd;
    s
}

fn ack_of(packets: usize, bytes: usize) -> AckEvent {
    AckEvent {
        packets,
        bytes,
        largest_acked: 10,
        rtt_sample: None,
    }
}

#[test]
fn newreno_examples() {
    let mut st = state(10 * MSS, 10 * MSS);
    NewReno.increase_window(&mut st, &ack_of(1, MSS), SimTime::ZERO);
    assert_eq!(st.cwnd, 10 * MSS + MSS / 10);

    let mut st = state(4380, usize::MAX);
    NewReno.increase_window(&mut st, &ack_of(1, MSS), SimTime::ZERO);
    assert_eq!(st.cwnd, 5840);

    let mut st = state(60_000, usize::MAX);
    st.bytes_in_flight = 50_000;
    NewReno.on_congestion_event(&mut st, CongestionEvent::Loss, SimTime::ZERO);
    assert_eq!((st.ssthresh, st.cwnd), (25_000, 25_000));
}

#[test]
fn quic_examples() {
    let mut st = state(10 * MSS, 10 * MSS);
    let mut q = QuicNewReno;
    q.on_ack_received(&mut st, &ack_of(2, 2 * MSS), SimTime::ZERO);
    assert_eq!(st.cwnd, 10 * MSS + MSS / 5);

    let mut st = state(10 * MSS, usize::MAX);
    q.on_ack_received(&mut st, &ack_of(3, 3000), SimTime::ZERO);
    assert_eq!(st.cwnd, 10 * MSS + 3000);
}

#[test]
fn quic_outgrows_newreno_under_aggregated_acks() {
    let mut legacy = state(10 * MSS, 10 * MSS);
    let mut quic = legacy.clone();
    for _ in 0..100 {
        NewReno.increase_window(&mut legacy, &ack_of(2, 2 * MSS), SimTime::ZERO);
        QuicNewReno.on_ack_received(&mut quic, &ack_of(2, 2 * MSS), SimTime::ZERO);
    }
    assert!(quic.cwnd > legacy.cwnd, "{} vs {}", quic.cwnd, legacy.cwnd);
}

#[test]
fn vegas_examples() {
    assert_eq!(Vegas::diff_segments(25_000, ms(100), ms(100)), 0.0);
    let d = Vegas::diff_segments(30_000, ms(100), ms(150));
    assert!(d > VEGAS_BETA && (d - 6.85).abs() < 0.01, "{d}");
    // oracle: cwnd·(1/base − 1/srtt)·base/MSS, the per-RTT queued segments
    let oracle = 30_000.0 * (1.0 / 0.1 - 1.0 / 0.15) * 0.1 / MSS as f64;
    assert!((d - oracle).abs() < 1e-9);
}

#[test]
fn can_send_conditions() {
    let mut c = CongestionController::new(Box::new(NewReno), usize::MAX);
    for pn in 0..10 {
        assert!(c.can_send(MSS), "packet {pn} of the initial window");
        c.on_packet_sent(pn, MSS, true, SimTime::ZERO);
    }
    assert!(!c.can_send(MSS));
    assert!(c.can_send(0));
}

#[test]
fn rto_with_empty_flight_is_noop() {
    let mut c = CongestionController::new(Box::new(NewReno), usize::MAX);
    let before = c.state().clone();
    c.on_rto(&[], SimTime::ZERO);
    assert_eq!(c.state().cwnd, before.cwnd);
    assert_eq!(c.state().congestion_events, 0);
    assert_eq!(c.rto(), INITIAL_RTO);
}

#[test]
fn algorithm_names() {
    for name in ALGORITHMS {
        assert_eq!(algorithm_by_name(name).unwrap().name(), name);
    }
    assert!(algorithm_by_name("bbr").is_err());
}

// ---- loss rule ----

#[derive(Debug, Clone)]
struct LossCase {
    sent_at: Vec<u64>,
    acks: Vec<(BTreeSet<u64>, u64)>,
    time_threshold: Option<u64>,
}

fn loss_case() -> impl Strategy<Value = LossCase> {
    (1usize..=12).prop_flat_map(|n| {
        (
            proptest::collection::vec(0u64..20, n),
            proptest::collection::vec(
                (
                    proptest::collection::btree_set(0..n as u64, 1..=n),
                    0u64..100,
                ),
                1..8,
            ),
            proptest::option::of(10u64..200),
        )
            .prop_map(|(gaps, acks, tt)| {
                let mut t = 0;
                let sent_at = gaps
                    .iter()
                    .map(|g| {
                        t += g;
                        t
                    })
                    .collect::<Vec<_>>();
                let mut now = t;
                let acks = acks
                    .into_iter()
                    .map(|(s, g)| {
                        now += g;
                        (s, now)
                    })
                    .collect();
                LossCase {
                    sent_at,
                    acks,
                    time_threshold: tt,
                }
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    /// Incremental marking over a stream of ACKs equals applying the rule
    /// from scratch to the cumulative state after each ACK.
    #[test]
    fn loss_rule_matches_brute_force(case in loss_case()) {
        let rule = LossRule {
            reorder_threshold: DEFAULT_REORDER_THRESHOLD,
            time_threshold: case.time_threshold.map(ms),
        };
        let mut buf = SocketTxBuffer::new(1 << 20);
        for (pn, t) in case.sent_at.iter().enumerate() {
            buf.on_sent(pn as u64, Vec::new(), 100, SimTime::from_millis(*t), true).unwrap();
        }
        let mut acked = BTreeSet::new();
        let mut largest = 0;
        let mut declared: BTreeSet<u64> = BTreeSet::new();
        for (set, now) in &case.acks {
            let now = SimTime::from_millis(*now);
            let frame = AckFrame::from_packet_numbers(set, 0).unwrap();
            let got: BTreeSet<u64> = buf
                .on_ack(&frame, &rule, now)
                .unwrap()
                .lost
                .iter()
                .map(|p| p.packet_number)
                .collect();
            acked.extend(set.iter().copied());
            largest = largest.max(*set.last().unwrap());
            let want: BTreeSet<u64> = (0..case.sent_at.len() as u64)
                .filter(|p| !acked.contains(p) && !declared.contains(p))
                .filter(|&p| rule.is_lost(p, SimTime::from_millis(case.sent_at[p as usize]), largest, now))
                .collect();
            prop_assert_eq!(&got, &want);
            declared.extend(got);
        }
        prop_assert_eq!(buf.bytes_in_flight(), buf.recount_in_flight());
    }
}

#[test]
fn loss_rule_definition() {
    let r = LossRule::default();
    let t = SimTime::ZERO;
    assert!(r.is_lost(7, t, 10, t));
    assert!(!r.is_lost(8, t, 10, t));
    let r = LossRule::with_rtt(ms(80), ms(100));
    assert_eq!(r.time_threshold, Some(Duration::from_micros(112_500)));
    assert!(r.is_lost(9, t, 10, t + Duration::from_micros(112_500)));
    assert!(!r.is_lost(9, t, 10, t + Duration::from_micros(112_499)));
}

// ---- closed loop ----

const ONE_WAY: Duration = Duration::from_millis(20);
const SERIALIZE: Duration = Duration::from_millis(1);
const ACK_EVERY: usize = 2;
const ACK_DELAY: Duration = Duration::from_millis(25);
const PAYLOAD: usize = 1400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Arrive(u64),
    AckArrive(u64),
    AckTimer(u64),
    Rto(u64),
    LossTimer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Point {
    at: SimTime,
    cwnd: usize,
    ssthresh: usize,
    in_flight: usize,
}

/// Sender with an unlimited backlog over a fixed-rate link, a receiver that
/// acknowledges every second packet, and scripted drops. Checks window
/// invariants at every step and returns the cwnd trace.
fn drive(
    algo: Box<dyn CongestionOps>,
    ssthresh: usize,
    drops: &BTreeSet<u64>,
    until: SimTime,
) -> Vec<Point> {
    let mut cc = CongestionController::new(algo, ssthresh);
    let mut buf = SocketTxBuffer::new(1 << 24);
    let mut events: BTreeMap<(SimTime, u64), Ev> = BTreeMap::new();
    let mut seq = 0u64;
    let mut push = |events: &mut BTreeMap<(SimTime, u64), Ev>, at: SimTime, ev: Ev| {
        seq += 1;
        events.insert((at, seq), ev);
    };
    let mut next_pn = 0u64;
    let mut offset = 0u64;
    let mut link_free = SimTime::ZERO;
    let mut received: BTreeSet<u64> = BTreeSet::new();
    let mut recv_at: BTreeMap<u64, SimTime> = BTreeMap::new();
    let mut pending = 0usize;
    let mut ack_gen = 0u64;
    let mut acks: BTreeMap<u64, AckFrame> = BTreeMap::new();
    let mut ack_id = 0u64;
    let mut rto_gen = 0u64;
    let mut trace = Vec::new();
    let mut now = SimTime::ZERO;

    loop {
        // transmit
        while cc.can_send(MSS) {
            if !buf.has_unsent() {
                let f = Frame::Stream(StreamFrame {
                    stream_id: StreamId(1),
                    offset,
                    fin: false,
                    data: vec![0; PAYLOAD],
                });
                offset += PAYLOAD as u64;
                assert!(buf.add(f, false));
            }
            let frames = buf.next_packet(PAYLOAD + 20).expect("frames");
            let st = cc.state();
            assert!(st.bytes_in_flight + MSS <= st.cwnd + MSS);
            buf.on_sent(next_pn, frames, MSS, now, true).unwrap();
            cc.on_packet_sent(next_pn, MSS, true, now);
            let start = link_free.max(now);
            link_free = start + SERIALIZE;
            if !drops.contains(&next_pn) {
                push(&mut events, link_free + ONE_WAY, Ev::Arrive(next_pn));
            }
            next_pn += 1;
            rto_gen += 1;
            push(&mut events, now + cc.rto(), Ev::Rto(rto_gen));
        }
        if let Some(t) = buf.loss_time(&cc.loss_rule()) {
            push(&mut events, t.max(now), Ev::LossTimer);
        }

        let st = cc.state();
        assert!(st.cwnd >= MIN_WINDOW, "cwnd {} below minimum", st.cwnd);
        assert!(st.ssthresh >= MIN_WINDOW);
        assert!(cc.rto() >= MIN_RTO);
        assert_eq!(st.bytes_in_flight, buf.bytes_in_flight());
        assert_eq!(buf.bytes_in_flight(), buf.recount_in_flight());
        let p = Point {
            at: now,
            cwnd: st.cwnd,
            ssthresh: st.ssthresh,
            in_flight: st.bytes_in_flight,
        };
        if trace
            .last()
            .is_none_or(|l: &Point| (l.cwnd, l.ssthresh) != (p.cwnd, p.ssthresh))
        {
            trace.push(p);
        }

        let Some(((at, _), ev)) = events.pop_first() else {
            break;
        };
        if at > until {
            break;
        }
        now = at;
        let mut send_ack = false;
        match ev {
            Ev::Arrive(pn) => {
                received.insert(pn);
                recv_at.insert(pn, now);
                pending += 1;
                if pending >= ACK_EVERY {
                    send_ack = true;
                } else {
                    ack_gen += 1;
                    push(&mut events, now + ACK_DELAY, Ev::AckTimer(ack_gen));
                }
            }
            Ev::AckTimer(g) => send_ack = g == ack_gen && pending > 0,
            Ev::AckArrive(id) => {
                let frame = acks.remove(&id).unwrap();
                let rule = cc.loss_rule();
                let out = buf.on_ack(&frame, &rule, now).unwrap();
                cc.on_ack(
                    &out,
                    frame.largest_acked,
                    Duration::from_micros(frame.ack_delay_us as u64),
                    now,
                );
                buf.prepare_retransmissions();
                rto_gen += 1;
                if buf.has_in_flight() {
                    push(&mut events, now + cc.rto(), Ev::Rto(rto_gen));
                }
            }
            Ev::LossTimer => {
                let lost = buf.detect_losses(&cc.loss_rule(), now);
                cc.on_losses(&lost, now);
                buf.prepare_retransmissions();
            }
            Ev::Rto(g) => {
                if g == rto_gen && buf.has_in_flight() {
                    let lost = buf.mark_all_lost();
                    cc.on_rto(&lost, now);
                    buf.prepare_retransmissions();
                }
            }
        }
        if send_ack {
            pending = 0;
            ack_gen += 1;
            let largest = *received.last().unwrap();
            let delay = now - recv_at[&largest];
            // keep the frame small: the most recent 64 packets
            let recent: BTreeSet<u64> = received
                .range(largest.saturating_sub(64)..)
                .copied()
                .collect();
            let frame = AckFrame::from_packet_numbers(&recent, delay.as_micros() as u32).unwrap();
            ack_id += 1;
            acks.insert(ack_id, frame);
            push(&mut events, now + ONE_WAY, Ev::AckArrive(ack_id));
        }
    }
    trace
}

fn lossy(pns: &[u64]) -> BTreeSet<u64> {
    pns.iter().copied().collect()
}

#[test]
fn legacy_dispatch_preserves_arithmetic() {
    let drops = lossy(&[40, 41, 300, 900, 901, 902]);
    let until = SimTime::from_secs(8);
    let legacy = drive(Box::new(NewReno), usize::MAX, &drops, until);
    let shim = drive(Box::new(QuicShim(NewReno)), usize::MAX, &drops, until);
    assert!(legacy.len() > 50);
    assert_eq!(legacy, shim);
    let quic = drive(Box::new(QuicNewReno), usize::MAX, &drops, until);
    assert_ne!(
        legacy, quic,
        "the byte-counting variant takes a different path"
    );
}

#[test]
fn newreno_halves_on_loss_once_per_recovery() {
    let trace = drive(
        Box::new(NewReno),
        usize::MAX,
        &lossy(&[60, 61, 62]),
        SimTime::from_secs(3),
    );
    let cuts: Vec<_> = trace.windows(2).filter(|w| w[1].cwnd < w[0].cwnd).collect();
    assert_eq!(cuts.len(), 1, "{cuts:?}");
    let w = cuts[0];
    assert_eq!(w[1].cwnd, w[1].ssthresh);
}

#[test]
fn quic_ramps_faster_in_congestion_avoidance() {
    let ss = 15_000;
    let time_to_double = |algo: Box<dyn CongestionOps>| {
        let trace = drive(algo, ss, &BTreeSet::new(), SimTime::from_secs(30));
        let start = trace.iter().find(|p| p.cwnd >= ss).unwrap().at;
        let end = trace.iter().find(|p| p.cwnd >= 2 * ss).unwrap().at;
        end - start
    };
    let legacy = time_to_double(Box::new(NewReno));
    let quic = time_to_double(Box::new(QuicNewReno));
    assert!(quic < legacy, "quic {quic:?} legacy {legacy:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Window floors, flight accounting and the send rule hold for every
    /// algorithm under arbitrary drop patterns.
    #[test]
    fn window_invariants(
        drops in proptest::collection::btree_set(0u64..600, 0..40),
        which in 0usize..4,
    ) {
        let algo: Box<dyn CongestionOps> = match which {
            0 => Box::new(NewReno),
            1 => Box::new(Vegas::default()),
            2 => Box::new(QuicNewReno),
            _ => Box::new(QuicShim(NewReno)),
        };
        let trace = drive(algo, usize::MAX, &drops, SimTime::from_secs(4));
        prop_assert!(!trace.is_empty());
        for p in &trace {
            prop_assert!(p.cwnd >= MIN_WINDOW && p.ssthresh >= MIN_WINDOW);
        }
    }

    /// Legacy dispatch and the QUIC wrapper agree for any drop pattern.
    #[test]
    fn legacy_dispatch_identity(drops in proptest::collection::btree_set(0u64..600, 0..30)) {
        let until = SimTime::from_secs(4);
        prop_assert_eq!(
            drive(Box::new(NewReno), usize::MAX, &drops, until),
            drive(Box::new(QuicShim(NewReno)), usize::MAX, &drops, until)
        );
    }
}
