use std::time::Duration;

pub const INITIAL_RTO: Duration = Duration::from_secs(1);
pub const MIN_RTO: Duration = Duration::from_millis(200);
pub const MAX_RTO: Duration = Duration::from_secs(60);

/// Smoothed RTT with ack-delay correction and exponential RTO backoff.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RttEstimator {
    latest: Option<Duration>,
    smoothed: Option<Duration>,
    var: Duration,
    min: Option<Duration>,
    backoff: u32,
}

impl RttEstimator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn has_sample(&self) -> bool {
        self.smoothed.is_some()
    }

    pub fn latest(&self) -> Duration {
        self.latest.unwrap_or_default()
    }

    pub fn srtt(&self) -> Duration {
        self.smoothed.unwrap_or_default()
    }

    pub fn rttvar(&self) -> Duration {
        self.var
    }

    /// Smallest raw sample seen, before any ack-delay correction.
    pub fn min_rtt(&self) -> Duration {
        self.min.unwrap_or_default()
    }

    pub fn backoff_count(&self) -> u32 {
        self.backoff
    }

    pub fn update(&mut self, sample: Duration, ack_delay: Duration) {
        self.latest = Some(sample);
        let min = *self.min.get_or_insert(sample);
        let min = min.min(sample);
        self.min = Some(min);
        let adjusted = sample.saturating_sub(ack_delay).max(min);
        match self.smoothed {
            None => {
                self.smoothed = Some(adjusted);
                self.var = adjusted / 2;
            }
            Some(s) => {
                let diff = s.abs_diff(adjusted);
                self.var = (self.var * 3 + diff) / 4;
                self.smoothed = Some((s * 7 + adjusted) / 8);
            }
        }
        self.backoff = 0;
    }

    /// Current timeout including backoff.
    pub fn rto(&self) -> Duration {
        let base = match self.smoothed {
            None => INITIAL_RTO,
            Some(s) => (s + self.var * 4).max(MIN_RTO),
        };
        base.checked_mul(1u32 << self.backoff.min(16))
            .unwrap_or(MAX_RTO)
            .min(MAX_RTO)
    }

    pub fn on_rto_fired(&mut self) {
        self.backoff = self.backoff.saturating_add(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MS: fn(u64) -> Duration = Duration::from_millis;

    #[test]
    fn first_sample() {
        let mut r = RttEstimator::new();
        assert_eq!(r.rto(), INITIAL_RTO);
        r.update(MS(100), Duration::ZERO);
        assert_eq!((r.srtt(), r.rttvar(), r.rto()), (MS(100), MS(50), MS(300)));
    }

    #[test]
    fn ack_delay_is_removed_down_to_min_rtt() {
        let mut r = RttEstimator::new();
        r.update(MS(100), Duration::ZERO);
        r.update(MS(120), MS(20));
        // adjusted 100 ms: srtt stays, rttvar decays
        assert_eq!(r.srtt(), MS(100));
        assert_eq!(r.rttvar(), Duration::from_micros(37_500));
        r.update(MS(120), MS(50));
        assert_eq!(r.srtt(), MS(100));
        assert_eq!(r.latest(), MS(120));
    }

    #[test]
    fn backoff_doubles_until_next_sample() {
        let mut r = RttEstimator::new();
        r.update(MS(100), Duration::ZERO);
        let mut seen = vec![r.rto()];
        for _ in 0..3 {
            r.on_rto_fired();
            seen.push(r.rto());
        }
        assert_eq!(seen, [MS(300), MS(600), MS(1200), MS(2400)]);
        for _ in 0..20 {
            r.on_rto_fired();
        }
        assert_eq!(r.rto(), MAX_RTO);
        r.update(MS(100), Duration::ZERO);
        assert!(r.rto() < MS(300));
    }

    #[test]
    fn floor() {
        let mut r = RttEstimator::new();
        r.update(MS(10), Duration::ZERO);
        assert_eq!(r.rto(), MIN_RTO);
    }

    #[test]
    fn converges_on_fixed_path() {
        // first sample slightly inflated by the handshake's extra bytes
        let mut r = RttEstimator::new();
        r.update(MS(104), Duration::ZERO);
        for _ in 0..19 {
            r.update(MS(100), Duration::ZERO);
        }
        assert_eq!(r.min_rtt(), MS(100));
        let err = r.srtt().as_secs_f64() / 0.1 - 1.0;
        assert!(err.abs() < 0.01, "srtt {:?}", r.srtt());
    }
}
