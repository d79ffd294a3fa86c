//! Wall clocks in Unix epoch milliseconds.

use std::sync::atomic::{AtomicI64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    fn now_ms(&self) -> i64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> i64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as i64)
            .unwrap_or(0)
    }
}

/// Manually advanced clock for deterministic tests.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicI64);

impl ManualClock {
    pub fn new(start_ms: i64) -> Self {
        Self(AtomicI64::new(start_ms))
    }

    pub fn set(&self, ms: i64) {
        self.0.store(ms, Ordering::SeqCst);
    }

    pub fn advance(&self, ms: i64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> i64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Epoch clock driven by the tokio timer.
///
/// Under a paused runtime this follows virtual time, so whole sessions can
/// run in simulated time while still going through real tasks and queues.
#[derive(Debug, Clone, Copy)]
pub struct TokioClock {
    origin_epoch_ms: i64,
    origin: tokio::time::Instant,
}

impl TokioClock {
    pub fn new(origin_epoch_ms: i64) -> Self {
        Self {
            origin_epoch_ms,
            origin: tokio::time::Instant::now(),
        }
    }

    /// Anchored at the current system time.
    pub fn from_system() -> Self {
        Self::new(SystemClock.now_ms())
    }

    /// Milliseconds (fractional) since the clock was created.
    pub fn elapsed_ms(&self) -> f64 {
        self.origin.elapsed().as_secs_f64() * 1000.0
    }
}

impl Clock for TokioClock {
    fn now_ms(&self) -> i64 {
        self.origin_epoch_ms + self.origin.elapsed().as_millis() as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manual_clock_moves_only_when_told() {
        let c = ManualClock::new(1_000);
        assert_eq!(c.now_ms(), 1_000);
        c.advance(250);
        assert_eq!(c.now_ms(), 1_250);
        c.set(5);
        assert_eq!(c.now_ms(), 5);
    }

    #[tokio::test(start_paused = true)]
    async fn tokio_clock_follows_virtual_time() {
        let c = TokioClock::new(1_700_000_000_000);
        tokio::time::sleep(std::time::Duration::from_secs(90)).await;
        assert_eq!(c.now_ms(), 1_700_000_090_000);
    }
}
