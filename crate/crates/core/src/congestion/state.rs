use super::rtt::RttEstimator;

pub const MSS: usize = crate::wire::MAX_PACKET_SIZE;
pub const INITIAL_WINDOW: usize = 10 * MSS;
pub const MIN_WINDOW: usize = 2 * MSS;

/// Socket-level variables shared by every algorithm.
#[derive(Clone, Debug)]
pub struct CongestionState {
    pub cwnd: usize,
    pub ssthresh: usize,
    pub bytes_in_flight: usize,
    pub rtt: RttEstimator,
    pub largest_acked_pn: Option<u64>,
    pub largest_sent_pn: Option<u64>,
    /// Packets up to this number belong to the current recovery period.
    pub recovery_end_pn: Option<u64>,
    pub legacy_mode: bool,
    pub packets_lost: u64,
    pub congestion_events: u64,
}

impl CongestionState {
    pub fn new(initial_ssthresh: usize) -> Self {
        CongestionState {
            cwnd: INITIAL_WINDOW,
            ssthresh: initial_ssthresh.max(MIN_WINDOW),
            bytes_in_flight: 0,
            rtt: RttEstimator::new(),
            largest_acked_pn: None,
            largest_sent_pn: None,
            recovery_end_pn: None,
            legacy_mode: true,
            packets_lost: 0,
            congestion_events: 0,
        }
    }

    pub fn in_slow_start(&self) -> bool {
        self.cwnd < self.ssthresh
    }

    pub fn in_recovery(&self, pn: u64) -> bool {
        self.recovery_end_pn.is_some_and(|end| pn <= end)
    }

    /// Halved flight, never below the minimum window.
    pub fn reduced_ssthresh(&self) -> usize {
        (self.bytes_in_flight / 2).max(MIN_WINDOW)
    }
}
