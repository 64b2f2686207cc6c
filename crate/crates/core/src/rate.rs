//! Launch spacing and retry backoff arithmetic.

use core::fmt;
use core::num::NonZeroU32;
use core::time::Duration;

use serde::{Deserialize, Serialize};

const NANOS_PER_MINUTE: u64 = 60_000_000_000;

/// A queries-per-minute rate; never zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct Qpm(NonZeroU32);

impl Qpm {
    pub const fn new(qpm: u32) -> Option<Self> {
        match NonZeroU32::new(qpm) {
            Some(n) => Some(Qpm(n)),
            None => None,
        }
    }

    pub const fn get(self) -> u32 {
        self.0.get()
    }

    pub fn interval(self) -> Duration {
        launch_interval(self)
    }
}

impl TryFrom<u32> for Qpm {
    type Error = ZeroRate;
    fn try_from(v: u32) -> Result<Self, ZeroRate> {
        Qpm::new(v).ok_or(ZeroRate)
    }
}

impl From<Qpm> for u32 {
    fn from(q: Qpm) -> u32 {
        q.get()
    }
}

impl fmt::Display for Qpm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} QPM", self.get())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("rate must be at least 1 query per minute")]
pub struct ZeroRate;

/// Time between consecutive launches in one queue: 60 s / rate, rounded up
/// to the next nanosecond so spacing is never shorter than the rate allows.
pub fn launch_interval(rate: Qpm) -> Duration {
    Duration::from_nanos(NANOS_PER_MINUTE.div_ceil(u64::from(rate.get())))
}

/// Capped exponential backoff with full jitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackoffPolicy {
    pub base: Duration,
    pub cap: Duration,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        Self {
            base: Duration::from_secs(1),
            cap: Duration::from_secs(30),
        }
    }
}

impl BackoffPolicy {
    /// Upper bound of the sleep after failed attempt `attempt` (1-based):
    /// `min(cap, base * 2^(attempt-1))`.
    pub fn ceiling(&self, attempt: u32) -> Duration {
        let doublings = attempt.saturating_sub(1);
        let factor = 1u32.checked_shl(doublings).filter(|f| *f != 0);
        match factor.and_then(|f| self.base.checked_mul(f)) {
            Some(d) => d.min(self.cap),
            None => self.cap,
        }
    }

    /// Jittered delay; `unit` is a uniform sample in `[0, 1]`.
    pub fn delay(&self, attempt: u32, unit: f64) -> Duration {
        self.ceiling(attempt).mul_f64(unit.clamp(0.0, 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(n: u32) -> Qpm {
        Qpm::new(n).unwrap()
    }

    #[test]
    fn interval_examples() {
        assert_eq!(launch_interval(q(50)), Duration::from_millis(1200));
        assert_eq!(launch_interval(q(60)), Duration::from_secs(1));
        assert_eq!(launch_interval(q(500)), Duration::from_millis(120));
        assert_eq!(launch_interval(q(1)), Duration::from_secs(60));
    }

    #[test]
    fn zero_rate_is_rejected() {
        assert_eq!(Qpm::new(0), None);
        assert!(serde_json::from_str::<Qpm>("0").is_err());
        assert_eq!(serde_json::from_str::<Qpm>("500").unwrap(), q(500));
    }

    #[test]
    fn backoff_ceilings() {
        let b = BackoffPolicy::default();
        assert_eq!(b.ceiling(1), Duration::from_secs(1));
        assert_eq!(b.ceiling(5), Duration::from_secs(16));
        assert_eq!(b.ceiling(6), Duration::from_secs(30));
        assert_eq!(b.ceiling(10), Duration::from_secs(30));
        assert_eq!(b.ceiling(200), Duration::from_secs(30));
        assert_eq!(b.delay(5, 0.5), Duration::from_secs(8));
        assert_eq!(b.delay(5, 0.0), Duration::ZERO);
        assert_eq!(b.delay(5, 7.0), Duration::from_secs(16));
    }

    proptest! {
        #[test]
        fn interval_times_rate_covers_a_minute(n in 1u32..100_000) {
            let i = launch_interval(q(n));
            let total = i.as_nanos() * u128::from(n);
            prop_assert!(total >= 60_000_000_000);
            prop_assert!(total < 60_000_000_000 + u128::from(n));
        }

        #[test]
        fn backoff_is_monotone_and_capped(k in 1u32..64, u in 0.0f64..=1.0) {
            let b = BackoffPolicy::default();
            prop_assert!(b.ceiling(k) <= b.ceiling(k + 1));
            prop_assert!(b.ceiling(k) <= b.cap);
            prop_assert!(b.delay(k, u) <= b.ceiling(k));
        }
    }
}
