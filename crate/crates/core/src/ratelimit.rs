//! Token-bucket rate limiter over simulation steps.
//!
//! Guards the crypto-heavy device handlers against battery-drain floods.
//! Integer arithmetic throughout: tokens are tracked scaled by the window
//! length so refill stays exact.

#[derive(Debug, Clone)]
pub struct TokenBucket {
    capacity: u64,
    window: u64,
    scaled_tokens: u64,
    last_step: u64,
}

impl TokenBucket {
    /// A bucket admitting `capacity` requests per `window` steps, starting full.
    pub fn new(capacity: u64, window: u64) -> Self {
        assert!(capacity > 0 && window > 0);
        TokenBucket {
            capacity,
            window,
            scaled_tokens: capacity * window,
            last_step: 0,
        }
    }

    /// Try to consume one token at `step`. Returns false when exhausted.
    pub fn admit(&mut self, step: u64) -> bool {
        self.refill(step);
        if self.scaled_tokens >= self.window {
            self.scaled_tokens -= self.window;
            true
        } else {
            false
        }
    }

    fn refill(&mut self, step: u64) {
        let elapsed = step.saturating_sub(self.last_step);
        self.last_step = self.last_step.max(step);
        self.scaled_tokens =
            (self.scaled_tokens + elapsed * self.capacity).min(self.capacity * self.window);
    }

    pub fn available(&self, step: u64) -> u64 {
        let mut probe = self.clone();
        probe.refill(step);
        probe.scaled_tokens / probe.window
    }
}
