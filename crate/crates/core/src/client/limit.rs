use std::sync::Mutex;
use std::time::{Duration, Instant};

use super::{ClientError, ModelClient, ModelRequest, ModelResponse};

/// Token-bucket rate limiter shared by all threads calling one backend.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    /// `per_second` must be positive; the bucket starts full.
    pub fn new(capacity: u32, per_second: f64) -> Self {
        assert!(per_second > 0.0, "refill rate must be positive");
        let capacity = f64::from(capacity.max(1));
        Self {
            capacity,
            per_second,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    /// Takes a token if one is available at `now`, otherwise returns how
    /// long until one will be.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        let mut state = self.state.lock().expect("poisoned");
        let (tokens, last) = *state;
        let elapsed = now.saturating_duration_since(last).as_secs_f64();
        let tokens = (tokens + elapsed * self.per_second).min(self.capacity);
        if tokens >= 1.0 {
            *state = (tokens - 1.0, now.max(last));
            Ok(())
        } else {
            *state = (tokens, now.max(last));
            Err(Duration::from_secs_f64((1.0 - tokens) / self.per_second))
        }
    }

    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire_at(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
}

/// Wraps a client so every `send` first takes a token from the bucket.
pub struct RateLimited<C> {
    inner: C,
    bucket: TokenBucket,
}

impl<C: ModelClient> RateLimited<C> {
    pub fn new(inner: C, bucket: TokenBucket) -> Self {
        Self { inner, bucket }
    }
}

impl<C: ModelClient> ModelClient for RateLimited<C> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn send(&self, req: &ModelRequest) -> Result<ModelResponse, ClientError> {
        self.bucket.acquire();
        self.inner.send(req)
    }
}
