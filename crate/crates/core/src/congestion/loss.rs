use std::time::Duration;

use crate::sim::SimTime;

pub const DEFAULT_REORDER_THRESHOLD: u64 = 3;

/// Declares an outstanding packet lost when enough later packets have been
/// acknowledged or when it has been outstanding for too long.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossRule {
    pub reorder_threshold: u64,
    /// `None` until the first RTT sample.
    pub time_threshold: Option<Duration>,
}

impl Default for LossRule {
    fn default() -> Self {
        LossRule {
            reorder_threshold: DEFAULT_REORDER_THRESHOLD,
            time_threshold: None,
        }
    }
}

impl LossRule {
    /// 9/8 of the larger of the smoothed and the latest RTT.
    pub fn time_threshold_for(srtt: Duration, latest_rtt: Duration) -> Duration {
        srtt.max(latest_rtt) * 9 / 8
    }

    pub fn with_rtt(srtt: Duration, latest_rtt: Duration) -> Self {
        LossRule {
            reorder_threshold: DEFAULT_REORDER_THRESHOLD,
            time_threshold: Some(Self::time_threshold_for(srtt, latest_rtt)),
        }
    }

    /// Only packets sent before the largest acknowledged one are candidates.
    pub fn is_lost(&self, pn: u64, sent_at: SimTime, largest_acked: u64, now: SimTime) -> bool {
        if pn >= largest_acked {
            return false;
        }
        if pn + self.reorder_threshold <= largest_acked {
            return true;
        }
        matches!(self.time_threshold, Some(t) if sent_at + t <= now)
    }

    /// When a packet that is not yet lost would cross the time threshold.
    pub fn loss_deadline(&self, pn: u64, sent_at: SimTime, largest_acked: u64) -> Option<SimTime> {
        if pn >= largest_acked {
            return None;
        }
        self.time_threshold.map(|t| sent_at + t)
    }
}
