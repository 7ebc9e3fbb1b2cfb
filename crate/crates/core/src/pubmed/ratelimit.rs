use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Monotonic time source. Times are offsets from an arbitrary origin.
pub trait Clock: Send + Sync {
    fn now(&self) -> Duration;

    /// Block until `now() >= deadline`.
    fn sleep_until(&self, deadline: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock {
            origin: Instant::now(),
        }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep_until(&self, deadline: Duration) {
        let now = self.now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        }
    }
}

/// Virtual clock for tests: sleeping jumps time forward instantly.
#[derive(Debug, Default)]
pub struct MockClock {
    now: Mutex<Duration>,
    sleeps: Mutex<Vec<Duration>>,
}

impl MockClock {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn advance(&self, by: Duration) {
        *self.now.lock().unwrap() += by;
    }

    /// Durations requested by each `sleep_until` call, in call order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.sleeps.lock().unwrap().clone()
    }
}

impl Clock for MockClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep_until(&self, deadline: Duration) {
        let mut now = self.now.lock().unwrap();
        self.sleeps
            .lock()
            .unwrap()
            .push(deadline.saturating_sub(*now));
        if deadline > *now {
            *now = deadline;
        }
    }
}

/// Spaces requests at least `1 / rate` apart.
///
/// With that spacing no half-open one-second window can hold more than
/// `ceil(rate)` requests. Slots are handed out under a lock and waited for
/// outside it, so concurrent callers queue fairly.
pub struct RateLimiter {
    interval: Duration,
    next_slot: Mutex<Duration>,
    clock: Arc<dyn Clock>,
}

impl RateLimiter {
    pub fn new(max_requests_per_second: f64, clock: Arc<dyn Clock>) -> Self {
        assert!(max_requests_per_second > 0.0);
        let nanos = (1e9 / max_requests_per_second).ceil() as u64;
        RateLimiter {
            interval: Duration::from_nanos(nanos.max(1)),
            next_slot: Mutex::new(Duration::ZERO),
            clock,
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Wait for the next free slot; returns the slot time.
    pub fn acquire(&self) -> Duration {
        let slot = {
            let mut next = self.next_slot.lock().unwrap();
            let slot = (*next).max(self.clock.now());
            *next = slot + self.interval;
            slot
        };
        self.clock.sleep_until(slot);
        slot
    }
}
