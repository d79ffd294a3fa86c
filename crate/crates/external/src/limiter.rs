//! Sliding-window call quota.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use fogdrive_core::Clock;

/// At most `capacity` permits in any window of `window_ms`.
///
/// A permit at time `t` is granted iff fewer than `capacity` permits were
/// granted in `(t - window_ms, t]`.
#[derive(Debug, Clone)]
pub struct SlidingWindow {
    capacity: usize,
    window_ms: i64,
    granted: VecDeque<i64>,
}

impl SlidingWindow {
    pub fn new(capacity: usize, window_ms: i64) -> Self {
        Self {
            capacity,
            window_ms,
            granted: VecDeque::with_capacity(capacity),
        }
    }

    /// 60 calls per minute.
    pub fn per_minute(capacity: usize) -> Self {
        Self::new(capacity, 60_000)
    }

    fn evict(&mut self, now_ms: i64) {
        while let Some(&oldest) = self.granted.front() {
            if oldest <= now_ms - self.window_ms {
                self.granted.pop_front();
            } else {
                break;
            }
        }
    }

    pub fn try_acquire(&mut self, now_ms: i64) -> bool {
        self.evict(now_ms);
        if self.granted.len() < self.capacity {
            self.granted.push_back(now_ms);
            true
        } else {
            false
        }
    }

    /// Earliest time a permit could be granted, given no other calls.
    pub fn next_permit_at(&mut self, now_ms: i64) -> i64 {
        self.evict(now_ms);
        if self.granted.len() < self.capacity {
            now_ms
        } else {
            self.granted[self.granted.len() - self.capacity] + self.window_ms
        }
    }

    pub fn in_window(&mut self, now_ms: i64) -> usize {
        self.evict(now_ms);
        self.granted.len()
    }
}

/// Thread-safe limiter bound to a clock; one per external service.
pub struct RateLimiter {
    window: Mutex<SlidingWindow>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(window: SlidingWindow, clock: Arc<dyn Clock>) -> Self {
        Self {
            window: Mutex::new(window),
            clock,
        }
    }

    /// `Ok` with the permit time, or `Err` with the earliest retry time.
    pub fn acquire(&self) -> Result<i64, i64> {
        let now = self.clock.now_ms();
        let mut w = self.window.lock().expect("limiter lock");
        if w.try_acquire(now) {
            Ok(now)
        } else {
            Err(w.next_permit_at(now))
        }
    }

    pub fn now_ms(&self) -> i64 {
        self.clock.now_ms()
    }
}
