use std::time::Duration;

use super::algorithm::{AckEvent, CongestionEvent, CongestionOps, NewReno, QuicNewReno, Vegas};
use super::loss::LossRule;
use super::state::CongestionState;
use crate::buffers::{AckOutcome, SentPacketInfo};
use crate::error::ConfigError;
use crate::sim::SimTime;

pub const ALGORITHMS: [&str; 3] = ["newreno", "vegas", "quic"];

pub fn algorithm_by_name(name: &str) -> Result<Box<dyn CongestionOps>, ConfigError> {
    match name.to_ascii_lowercase().as_str() {
        "newreno" => Ok(Box::new(NewReno)),
        "vegas" => Ok(Box::new(Vegas::default())),
        "quic" => Ok(Box::new(QuicNewReno)),
        _ => Err(ConfigError::UnknownAlgorithm {
            name: name.to_string(),
            valid: ALGORITHMS.join(", "),
        }),
    }
}

/// Drives one algorithm from the connection's send, ACK, loss and timeout
/// events.
pub struct CongestionController {
    state: CongestionState,
    algo: Box<dyn CongestionOps>,
}

impl std::fmt::Debug for CongestionController {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CongestionController")
            .field("algorithm", &self.algo.name())
            .field("state", &self.state)
            .finish()
    }
}

impl CongestionController {
    pub fn new(mut algo: Box<dyn CongestionOps>, initial_ssthresh: usize) -> Self {
        let mut state = CongestionState::new(initial_ssthresh);
        state.legacy_mode = algo.quic().is_none();
        CongestionController { state, algo }
    }

    pub fn state(&self) -> &CongestionState {
        &self.state
    }

    pub fn algorithm(&self) -> &'static str {
        self.algo.name()
    }

    pub fn loss_rule(&self) -> LossRule {
        let rtt = &self.state.rtt;
        if rtt.has_sample() {
            LossRule::with_rtt(rtt.srtt(), rtt.latest())
        } else {
            LossRule::default()
        }
    }

    pub fn rto(&self) -> Duration {
        self.state.rtt.rto()
    }

    pub fn can_send(&self, size: usize) -> bool {
        self.state.bytes_in_flight + size <= self.state.cwnd
    }

    pub fn on_packet_sent(&mut self, pn: u64, size: usize, in_flight: bool, now: SimTime) {
        self.state.largest_sent_pn = Some(pn);
        if !in_flight {
            return;
        }
        self.state.bytes_in_flight += size;
        if !self.state.legacy_mode {
            if let Some(q) = self.algo.quic() {
                q.on_packet_sent(&self.state, size, pn, now);
            }
        }
    }

    /// Applies an ACK's newly acknowledged and newly lost packets.
    pub fn on_ack(
        &mut self,
        outcome: &AckOutcome,
        largest_acked: u64,
        ack_delay: Duration,
        now: SimTime,
    ) {
        let st = &mut self.state;
        st.largest_acked_pn = Some(
            st.largest_acked_pn
                .map_or(largest_acked, |l| l.max(largest_acked)),
        );
        let rtt_sample = outcome.largest_newly_acked.map(|p| now - p.sent_at);
        if let Some(sample) = rtt_sample.filter(|s| !s.is_zero()) {
            st.rtt.update(sample, ack_delay);
        }
        let acked: Vec<&SentPacketInfo> = outcome.acked.iter().filter(|p| p.in_flight).collect();
        let bytes: usize = acked.iter().map(|p| p.size).sum();
        st.bytes_in_flight -= bytes;

        self.on_losses(&outcome.lost, now);

        let st = &mut self.state;
        if st.recovery_end_pn.is_some_and(|end| largest_acked > end) {
            st.recovery_end_pn = None;
        }
        let growing: Vec<&&SentPacketInfo> = acked
            .iter()
            .filter(|p| !st.in_recovery(p.packet_number))
            .collect();
        if growing.is_empty() {
            return;
        }
        let ev = AckEvent {
            packets: growing.len(),
            bytes: growing.iter().map(|p| p.size).sum(),
            largest_acked,
            rtt_sample,
        };
        if st.legacy_mode {
            self.algo.increase_window(st, &ev, now);
        } else if let Some(q) = self.algo.quic() {
            q.on_ack_received(st, &ev, now);
        }
    }

    /// Lost packets sent after the current recovery period started begin a
    /// new congestion event.
    pub fn on_losses(&mut self, lost: &[SentPacketInfo], now: SimTime) {
        if lost.is_empty() {
            return;
        }
        let st = &mut self.state;
        st.packets_lost += lost.iter().filter(|p| p.in_flight).count() as u64;
        let new_event = lost
            .iter()
            .any(|p| p.in_flight && !st.in_recovery(p.packet_number));
        if new_event {
            st.congestion_events += 1;
            self.algo
                .on_congestion_event(st, CongestionEvent::Loss, now);
            st.recovery_end_pn = st.largest_sent_pn;
        }
        st.bytes_in_flight -= lost
            .iter()
            .filter(|p| p.in_flight)
            .map(|p| p.size)
            .sum::<usize>();
    }

    /// Retransmission timeout with everything outstanding now declared lost.
    pub fn on_rto(&mut self, lost: &[SentPacketInfo], now: SimTime) {
        let st = &mut self.state;
        if st.bytes_in_flight == 0 {
            return;
        }
        st.packets_lost += lost.iter().filter(|p| p.in_flight).count() as u64;
        st.congestion_events += 1;
        self.algo.on_congestion_event(st, CongestionEvent::Rto, now);
        st.recovery_end_pn = st.largest_sent_pn;
        st.rtt.on_rto_fired();
        st.bytes_in_flight -= lost
            .iter()
            .filter(|p| p.in_flight)
            .map(|p| p.size)
            .sum::<usize>();
    }
}
