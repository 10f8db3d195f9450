use std::time::Duration;

use super::state::{CongestionState, MIN_WINDOW, MSS};
use crate::sim::SimTime;

/// Newly acknowledged in-flight packets from one ACK frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckEvent {
    pub packets: usize,
    pub bytes: usize,
    pub largest_acked: u64,
    /// Raw sample, present when the largest acknowledged packet is new.
    pub rtt_sample: Option<Duration>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CongestionEvent {
    Loss,
    Rto,
}

/// Window arithmetic of a congestion control algorithm. Algorithms written
/// against this interface are dispatched in legacy mode.
pub trait CongestionOps: Send {
    fn name(&self) -> &'static str;

    fn increase_window(&mut self, st: &mut CongestionState, ack: &AckEvent, now: SimTime);

    fn on_congestion_event(
        &mut self,
        st: &mut CongestionState,
        kind: CongestionEvent,
        _now: SimTime,
    ) {
        st.ssthresh = st.reduced_ssthresh();
        st.cwnd = match kind {
            CongestionEvent::Loss => st.ssthresh,
            CongestionEvent::Rto => MIN_WINDOW,
        };
    }

    /// Present for algorithms that use the extra information QUIC provides;
    /// its presence turns legacy mode off.
    fn quic(&mut self) -> Option<&mut dyn QuicCongestionOps> {
        None
    }
}

pub trait QuicCongestionOps {
    fn on_packet_sent(&mut self, _st: &CongestionState, _bytes: usize, _pn: u64, _now: SimTime) {}

    fn on_ack_received(&mut self, st: &mut CongestionState, ack: &AckEvent, now: SimTime);
}

#[derive(Clone, Debug, Default)]
pub struct NewReno;

impl NewReno {
    pub fn slow_start(st: &mut CongestionState, packets: usize) {
        st.cwnd += MSS * packets;
    }

    /// One increment per ACK, however many packets it covers.
    pub fn congestion_avoidance(st: &mut CongestionState) {
        st.cwnd += (MSS * MSS / st.cwnd).max(1);
    }
}

impl CongestionOps for NewReno {
    fn name(&self) -> &'static str {
        "newreno"
    }

    fn increase_window(&mut self, st: &mut CongestionState, ack: &AckEvent, _now: SimTime) {
        if ack.packets == 0 {
            return;
        }
        if st.in_slow_start() {
            Self::slow_start(st, ack.packets);
        } else {
            Self::congestion_avoidance(st);
        }
    }
}

/// NewReno recovery with byte-counting window growth. The congestion
/// avoidance increase, proportional to acknowledged bytes, is an
/// interpretation rather than a fixed rule.
#[derive(Clone, Debug, Default)]
pub struct QuicNewReno;

impl CongestionOps for QuicNewReno {
    fn name(&self) -> &'static str {
        "quic"
    }

    fn increase_window(&mut self, st: &mut CongestionState, ack: &AckEvent, now: SimTime) {
        self.on_ack_received(st, ack, now);
    }

    fn quic(&mut self) -> Option<&mut dyn QuicCongestionOps> {
        Some(self)
    }
}

impl QuicCongestionOps for QuicNewReno {
    fn on_ack_received(&mut self, st: &mut CongestionState, ack: &AckEvent, _now: SimTime) {
        if st.in_slow_start() {
            st.cwnd += ack.bytes;
        } else {
            st.cwnd += MSS * ack.bytes / st.cwnd;
        }
    }
}

/// Presents a legacy algorithm through the QUIC interface without changing
/// its arithmetic.
#[derive(Clone, Debug, Default)]
pub struct QuicShim<A>(pub A);

impl<A: CongestionOps> CongestionOps for QuicShim<A> {
    fn name(&self) -> &'static str {
        self.0.name()
    }

    fn increase_window(&mut self, st: &mut CongestionState, ack: &AckEvent, now: SimTime) {
        self.0.increase_window(st, ack, now);
    }

    fn on_congestion_event(
        &mut self,
        st: &mut CongestionState,
        kind: CongestionEvent,
        now: SimTime,
    ) {
        self.0.on_congestion_event(st, kind, now);
    }

    fn quic(&mut self) -> Option<&mut dyn QuicCongestionOps> {
        Some(self)
    }
}

impl<A: CongestionOps> QuicCongestionOps for QuicShim<A> {
    fn on_ack_received(&mut self, st: &mut CongestionState, ack: &AckEvent, now: SimTime) {
        self.0.increase_window(st, ack, now);
    }
}

pub const VEGAS_ALPHA: f64 = 2.0;
pub const VEGAS_BETA: f64 = 4.0;
pub const VEGAS_GAMMA: f64 = 1.0;

/// Delay-based control: once per RTT, compares expected and actual
/// throughput and keeps a few segments queued at the bottleneck.
#[derive(Clone, Debug, Default)]
pub struct Vegas {
    /// The round ends when a packet numbered at least this is acknowledged.
    round_end: Option<u64>,
    samples_in_round: u32,
}

impl Vegas {
    /// Queued segments implied by the current window: cwnd·(1 − base/srtt)/MSS.
    pub fn diff_segments(cwnd: usize, base_rtt: Duration, srtt: Duration) -> f64 {
        if srtt.is_zero() {
            return 0.0;
        }
        cwnd as f64 * (1.0 - base_rtt.as_secs_f64() / srtt.as_secs_f64()) / MSS as f64
    }
}

impl CongestionOps for Vegas {
    fn name(&self) -> &'static str {
        "vegas"
    }

    fn increase_window(&mut self, st: &mut CongestionState, ack: &AckEvent, _now: SimTime) {
        if ack.rtt_sample.is_some() {
            self.samples_in_round += 1;
        }
        let next_round = st.largest_sent_pn.map_or(0, |p| p + 1);
        let round_end = *self.round_end.get_or_insert(next_round);
        if ack.largest_acked < round_end || self.samples_in_round <= 2 {
            if st.in_slow_start() && ack.packets > 0 {
                NewReno::slow_start(st, ack.packets);
            }
            return;
        }
        let diff = Self::diff_segments(st.cwnd, st.rtt.min_rtt(), st.rtt.srtt());
        if st.in_slow_start() {
            if diff > VEGAS_GAMMA {
                st.ssthresh = st.cwnd;
            } else {
                NewReno::slow_start(st, ack.packets);
            }
        } else if diff < VEGAS_ALPHA {
            st.cwnd += MSS;
        } else if diff > VEGAS_BETA {
            st.cwnd = (st.cwnd - MSS).max(MIN_WINDOW);
        }
        self.round_end = Some(next_round);
        self.samples_in_round = 0;
    }
}
