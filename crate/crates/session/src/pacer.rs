//! Token-bucket pacing with drop-on-empty.
//!
//! Tokens are counted in micro-bits so refills at microsecond resolution stay
//! exact in integer arithmetic. Frames are never queued: a frame the bucket
//! cannot cover is dropped on the spot.

use serde::{Deserialize, Serialize};

const MICRO: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Send,
    Drop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PacerStats {
    pub sent: u64,
    pub dropped: u64,
    pub sent_bytes: u64,
    /// A frame larger than the bucket was offered; it can never be sent.
    pub starved: bool,
}

#[derive(Debug, Clone)]
pub struct Pacer {
    budget_bps: u64,
    capacity: u128,
    tokens: u128,
    /// Shortfall forgiven to absorb timestamp quantization.
    slack: u128,
    last_us: Option<u64>,
    stats: PacerStats,
}

impl Pacer {
    /// Bucket holding at most `capacity_bytes`, starting full.
    ///
    /// Panics if `budget_bps` is zero.
    pub fn new(budget_bps: u64, capacity_bytes: u64) -> Self {
        assert!(budget_bps > 0, "pacing budget must be positive");
        let capacity = u128::from(capacity_bytes) * 8 * MICRO;
        Self {
            budget_bps,
            capacity,
            tokens: capacity,
            slack: u128::from(budget_bps),
            last_us: None,
            stats: PacerStats { sent: 0, dropped: 0, sent_bytes: 0, starved: false },
        }
    }

    /// Bucket sized for one frame, capped at one second of budget, so a
    /// window never carries more than the budget plus one frame.
    pub fn for_frames(budget_bps: u64, frame_bytes: u64) -> Self {
        let cap = frame_bytes.min(budget_bps / 8).max(1);
        Self::new(budget_bps, cap)
    }

    /// Timestamps are quantized to `quantum_us`; a shortfall smaller than
    /// one quantum of refill is forgiven. Defaults to 1 µs.
    pub fn with_clock_quantum_us(mut self, quantum_us: u64) -> Self {
        self.slack = u128::from(self.budget_bps) * u128::from(quantum_us);
        self
    }

    pub fn budget_bps(&self) -> u64 {
        self.budget_bps
    }

    pub fn stats(&self) -> &PacerStats {
        &self.stats
    }

    fn refill(&mut self, now_us: u64) {
        let elapsed = match self.last_us {
            Some(last) => now_us.saturating_sub(last),
            None => 0,
        };
        self.last_us = Some(self.last_us.map_or(now_us, |l| l.max(now_us)));
        let add = u128::from(self.budget_bps) * u128::from(elapsed);
        self.tokens = (self.tokens + add).min(self.capacity);
    }

    /// Decides whether a frame of `bytes` offered at `now_us` goes out.
    pub fn offer(&mut self, bytes: u64, now_us: u64) -> Decision {
        self.refill(now_us);
        let cost = u128::from(bytes) * 8 * MICRO;
        if cost > self.capacity {
            self.stats.starved = true;
            self.stats.dropped += 1;
            return Decision::Drop;
        }
        if self.tokens + self.slack >= cost {
            self.tokens = self.tokens.saturating_sub(cost);
            self.stats.sent += 1;
            self.stats.sent_bytes += bytes;
            Decision::Send
        } else {
            self.stats.dropped += 1;
            Decision::Drop
        }
    }
}
