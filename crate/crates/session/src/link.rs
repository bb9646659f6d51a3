//! In-memory reliable, ordered byte channel with seeded latency jitter.
//!
//! Each direction owns a seeded generator; a write of `n` bytes is scheduled
//! for `now + latency + jitter`, never earlier than the write before it, so
//! the byte stream is never reordered.

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delivery {
    pub sent_us: u64,
    pub deliver_us: u64,
    pub len: usize,
}

#[derive(Debug)]
struct Channel {
    latency_us: u64,
    jitter_us: u64,
    rng: ChaCha8Rng,
    queue: VecDeque<(u64, Vec<u8>)>,
    last_deliver_us: u64,
    log: Vec<Delivery>,
}

impl Channel {
    fn new(latency_us: u64, jitter_us: u64, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { latency_us, jitter_us, rng, queue: VecDeque::new(), last_deliver_us: 0, log: Vec::new() }
    }

    fn send(&mut self, bytes: &[u8], now_us: u64) -> u64 {
        let jitter = if self.jitter_us == 0 { 0 } else { self.rng.gen_range(0..=self.jitter_us) };
        let at = (now_us + self.latency_us + jitter).max(self.last_deliver_us);
        self.last_deliver_us = at;
        self.log.push(Delivery { sent_us: now_us, deliver_us: at, len: bytes.len() });
        if !bytes.is_empty() {
            self.queue.push_back((at, bytes.to_vec()));
        }
        at
    }

    fn recv(&mut self, now_us: u64) -> Vec<u8> {
        let mut out = Vec::new();
        while let Some((at, _)) = self.queue.front() {
            if *at > now_us {
                break;
            }
            out.extend(self.queue.pop_front().expect("non-empty").1);
        }
        out
    }
}

/// One side of a duplex link.
#[derive(Debug, Clone)]
pub struct LinkEnd {
    tx: Arc<Mutex<Channel>>,
    rx: Arc<Mutex<Channel>>,
}

impl LinkEnd {
    /// Queues `bytes` and returns the time they become readable.
    pub fn send(&self, bytes: &[u8], now_us: u64) -> u64 {
        self.tx.lock().expect("link poisoned").send(bytes, now_us)
    }

    /// Everything that has arrived by `now_us`, in send order.
    pub fn recv(&self, now_us: u64) -> Vec<u8> {
        self.rx.lock().expect("link poisoned").recv(now_us)
    }

    /// Arrival time of the next pending chunk addressed to this end.
    pub fn next_arrival_us(&self) -> Option<u64> {
        self.rx.lock().expect("link poisoned").queue.front().map(|(at, _)| *at)
    }

    /// Schedule of every write made from this end so far.
    pub fn sent_log(&self) -> Vec<Delivery> {
        self.tx.lock().expect("link poisoned").log.clone()
    }
}

/// Creates a duplex channel. Each direction draws jitter from its own
/// stream of the seeded generator.
pub fn simulated_link(latency_ms: u64, jitter_ms: u64, seed: u64) -> (LinkEnd, LinkEnd) {
    simulated_link_us(latency_ms * 1000, jitter_ms * 1000, seed)
}

pub fn simulated_link_us(latency_us: u64, jitter_us: u64, seed: u64) -> (LinkEnd, LinkEnd) {
    let ab = Arc::new(Mutex::new(Channel::new(latency_us, jitter_us, seed, 0)));
    let ba = Arc::new(Mutex::new(Channel::new(latency_us, jitter_us, seed, 1)));
    (LinkEnd { tx: ab.clone(), rx: ba.clone() }, LinkEnd { tx: ba, rx: ab })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_latency_preserves_order_and_time() {
        let (a, b) = simulated_link(0, 0, 1);
        for i in 0..5u8 {
            assert_eq!(a.send(&[i], 7), 7);
        }
        assert_eq!(b.recv(7), vec![0, 1, 2, 3, 4]);
        assert!(a.recv(7).is_empty());
    }

    #[test]
    fn nothing_arrives_early() {
        let (a, b) = simulated_link(20, 0, 1);
        a.send(b"hi", 0);
        assert!(b.recv(19_999).is_empty());
        assert_eq!(b.next_arrival_us(), Some(20_000));
        assert_eq!(b.recv(20_000), b"hi");
    }

    #[test]
    fn jitter_never_reorders() {
        let (a, b) = simulated_link(5, 30, 9);
        let mut sent = Vec::new();
        for t in 0..500u64 {
            let chunk = [(t % 251) as u8; 3];
            a.send(&chunk, t * 100);
            sent.extend_from_slice(&chunk);
        }
        let log = a.sent_log();
        assert!(log.windows(2).all(|w| w[0].deliver_us <= w[1].deliver_us));
        assert_eq!(b.recv(u64::MAX), sent);
    }

    #[test]
    fn same_seed_same_schedule() {
        let run = |seed| {
            let (a, b) = simulated_link(10, 10, seed);
            for t in 0..100 {
                a.send(&[1], t * 1000);
                b.send(&[2], t * 1000);
            }
            (a.sent_log(), b.sent_log())
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
        let (ab, ba) = run(3);
        assert_ne!(ab, ba);
    }

    #[test]
    fn ends_work_across_threads() {
        let (a, b) = simulated_link(0, 0, 0);
        let writer = std::thread::spawn(move || {
            for i in 0..100u8 {
                a.send(&[i], 0);
            }
        });
        writer.join().unwrap();
        assert_eq!(b.recv(0), (0..100u8).collect::<Vec<_>>());
    }
}
