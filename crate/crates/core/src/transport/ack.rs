use std::collections::BTreeMap;
use std::time::Duration;

use crate::sim::SimTime;
use crate::wire::{ack_delay_encode, AckFrame};

/// Most ACK blocks carried in one frame; older ranges are left out.
pub const MAX_ACK_RANGES: usize = 64;
const KEPT_RANGES: usize = 4 * MAX_ACK_RANGES;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AckPolicy {
    /// Longest an ACK-eliciting packet waits for its acknowledgement.
    pub max_delay: Duration,
    /// ACK immediately once this many ACK-eliciting packets are pending.
    pub packet_threshold: u32,
}

impl Default for AckPolicy {
    fn default() -> Self {
        AckPolicy {
            max_delay: Duration::from_millis(1),
            packet_threshold: 2,
        }
    }
}

/// Received packet numbers and the pending-acknowledgement state.
#[derive(Clone, Debug, Default)]
pub struct RecvTracker {
    /// start -> end, inclusive, non-adjacent.
    ranges: BTreeMap<u64, u64>,
    largest: Option<(u64, SimTime)>,
    unacked: bool,
    eliciting_pending: u32,
    deadline: Option<SimTime>,
}

impl RecvTracker {
    pub fn largest(&self) -> Option<u64> {
        self.largest.map(|(pn, _)| pn)
    }

    pub fn contains(&self, pn: u64) -> bool {
        self.ranges
            .range(..=pn)
            .next_back()
            .is_some_and(|(_, &end)| pn <= end)
    }

    /// Records a packet; returns false for duplicates.
    pub fn on_packet(
        &mut self,
        pn: u64,
        eliciting: bool,
        now: SimTime,
        policy: &AckPolicy,
    ) -> bool {
        if self.contains(pn) {
            // a retransmitted duplicate still deserves a prompt ACK
            if eliciting {
                self.deadline = Some(now);
            }
            return false;
        }
        let in_order = self.largest.is_none_or(|(l, _)| pn == l + 1);
        self.insert(pn);
        if self.largest.is_none_or(|(l, _)| pn > l) {
            self.largest = Some((pn, now));
        }
        self.unacked = true;
        if eliciting {
            self.eliciting_pending += 1;
            let by = if !in_order || self.eliciting_pending >= policy.packet_threshold {
                now
            } else {
                now + policy.max_delay
            };
            self.deadline = Some(self.deadline.map_or(by, |d| d.min(by)));
        }
        true
    }

    fn insert(&mut self, pn: u64) {
        let mut start = pn;
        let mut end = pn;
        if let Some((&s, &e)) = self.ranges.range(..pn).next_back() {
            if e + 1 == pn {
                start = s;
            }
        }
        if let Some(&e) = self.ranges.get(&(pn + 1)) {
            self.ranges.remove(&(pn + 1));
            end = e;
        }
        self.ranges.insert(start, end);
        while self.ranges.len() > KEPT_RANGES {
            self.ranges.pop_first();
        }
    }

    /// Something received has not been reported in an ACK yet.
    pub fn has_unacked(&self) -> bool {
        self.unacked
    }

    pub fn ack_deadline(&self) -> Option<SimTime> {
        self.deadline
    }

    pub fn ack_due(&self, now: SimTime) -> bool {
        self.deadline.is_some_and(|d| d <= now)
    }

    pub fn build_ack(&self, now: SimTime) -> Option<AckFrame> {
        let (_, received_at) = self.largest?;
        let ranges: Vec<_> = self
            .ranges
            .iter()
            .rev()
            .take(MAX_ACK_RANGES)
            .map(|(&s, &e)| s..=e)
            .collect();
        let delay = ack_delay_encode(received_at, now).expect("ACK built before reception");
        AckFrame::from_ranges(&ranges, delay)
    }

    pub fn on_ack_sent(&mut self) {
        self.unacked = false;
        self.eliciting_pending = 0;
        self.deadline = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(pns: &[u64]) -> RecvTracker {
        let mut t = RecvTracker::default();
        for &pn in pns {
            t.on_packet(pn, true, SimTime::ZERO, &AckPolicy::default());
        }
        t
    }

    #[test]
    fn contiguous() {
        let a = track(&[1, 2, 3]).build_ack(SimTime::ZERO).unwrap();
        assert_eq!(
            (a.largest_acked, a.first_block_length, a.blocks.len()),
            (3, 3, 0)
        );
    }

    #[test]
    fn gap() {
        let a = track(&[1, 2, 5]).build_ack(SimTime::ZERO).unwrap();
        assert_eq!(a.largest_acked, 5);
        assert_eq!(a.ranges(), vec![5..=5, 1..=2]);
    }

    #[test]
    fn ack_delay_measured_from_largest() {
        let mut t = RecvTracker::default();
        t.on_packet(0, true, SimTime::from_millis(10), &AckPolicy::default());
        let a = t.build_ack(SimTime::from_millis(12)).unwrap();
        assert_eq!(a.ack_delay_us, 2000);
    }

    #[test]
    fn delayed_and_immediate() {
        let p = AckPolicy::default();
        let mut t = RecvTracker::default();
        t.on_packet(0, true, SimTime::ZERO, &p);
        assert_eq!(t.ack_deadline(), Some(SimTime::from_millis(1)));
        t.on_packet(1, true, SimTime::from_micros(100), &p);
        assert_eq!(t.ack_deadline(), Some(SimTime::from_micros(100)));
        t.on_ack_sent();
        t.on_packet(3, true, SimTime::from_micros(200), &p);
        assert_eq!(
            t.ack_deadline(),
            Some(SimTime::from_micros(200)),
            "gap acks at once"
        );
        t.on_ack_sent();
        t.on_packet(4, false, SimTime::from_micros(300), &p);
        assert!(t.has_unacked());
        assert_eq!(t.ack_deadline(), None);
    }

    #[test]
    fn ranges_merge() {
        let mut t = track(&[5, 3, 4, 1, 0, 2]);
        assert_eq!(t.ranges.len(), 1);
        assert!(!t.on_packet(3, true, SimTime::ZERO, &AckPolicy::default()));
    }

    #[test]
    fn at_most_64_blocks() {
        let pns: Vec<u64> = (0..200).map(|i| i * 2).collect();
        let a = track(&pns).build_ack(SimTime::ZERO).unwrap();
        assert_eq!(a.blocks.len(), MAX_ACK_RANGES - 1);
        assert_eq!(a.largest_acked, 398);
    }
}
