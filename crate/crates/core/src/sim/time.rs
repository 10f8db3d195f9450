use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::time::Duration;

/// Virtual simulation clock in integer microseconds since the start of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    /// Elapsed time since `earlier`, or `None` when `earlier` is in the future.
    pub fn checked_since(self, earlier: SimTime) -> Option<Duration> {
        self.0.checked_sub(earlier.0).map(Duration::from_micros)
    }

    pub fn saturating_since(self, earlier: SimTime) -> Duration {
        Duration::from_micros(self.0.saturating_sub(earlier.0))
    }
}

/// Converts a duration to whole ticks, truncating anything below a microsecond.
pub fn ticks(d: Duration) -> u64 {
    u64::try_from(d.as_micros()).unwrap_or(u64::MAX)
}

impl Add<Duration> for SimTime {
    type Output = SimTime;

    fn add(self, rhs: Duration) -> SimTime {
        SimTime(self.0.saturating_add(ticks(rhs)))
    }
}

impl AddAssign<Duration> for SimTime {
    fn add_assign(&mut self, rhs: Duration) {
        *self = *self + rhs;
    }
}

impl Sub for SimTime {
    type Output = Duration;

    /// Panics if `rhs` is later than `self`.
    fn sub(self, rhs: SimTime) -> Duration {
        self.checked_since(rhs)
            .unwrap_or_else(|| panic!("negative time difference: {self} - {rhs}"))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_has_microsecond_precision() {
        assert_eq!(SimTime::from_micros(1_025_000).to_string(), "1.025000");
        assert_eq!(SimTime::from_micros(7).to_string(), "0.000007");
    }

    #[test]
    fn arithmetic() {
        let t = SimTime::from_millis(5) + Duration::from_millis(25);
        assert_eq!(t, SimTime::from_millis(30));
        assert_eq!(t - SimTime::from_millis(10), Duration::from_millis(20));
        assert_eq!(SimTime::ZERO.checked_since(t), None);
        assert_eq!(SimTime::ZERO.saturating_since(t), Duration::ZERO);
    }
}
