//! Per-stream bandwidth accounting.
//!
//! The live rate is `8 · bytes / window` over the half-open sliding window
//! `(now − window, now]`. For reports the same traffic is also bucketed into
//! tumbling windows aligned to time zero.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MeterError {
    #[error("time went backwards: {now_ms} ms after {last_ms} ms")]
    NonMonotoneTime { last_ms: u64, now_ms: u64 },
    #[error("window length must be positive")]
    ZeroWindow,
}

#[derive(Debug, Clone, Default)]
struct StreamHistory {
    recent: VecDeque<(u64, u64)>,
    in_window: u64,
    total_bytes: u64,
    buckets: BTreeMap<u64, u64>,
}

impl StreamHistory {
    fn evict(&mut self, now_ms: u64, window_ms: u64) {
        while let Some(&(t, b)) = self.recent.front() {
            if t + window_ms > now_ms {
                break;
            }
            self.recent.pop_front();
            self.in_window -= b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub stream_id: String,
    pub window_start_ms: u64,
    pub bits_per_s: f64,
}

#[derive(Debug, Clone)]
pub struct BandwidthMeter {
    window_ms: u64,
    streams: BTreeMap<String, StreamHistory>,
    last_ms: Option<u64>,
}

impl BandwidthMeter {
    pub fn new(window_ms: u64) -> Result<Self, MeterError> {
        if window_ms == 0 {
            return Err(MeterError::ZeroWindow);
        }
        Ok(Self { window_ms, streams: BTreeMap::new(), last_ms: None })
    }

    pub fn window_ms(&self) -> u64 {
        self.window_ms
    }

    fn bits_per_s(&self, bytes: u64) -> f64 {
        (8 * bytes) as f64 * 1000.0 / self.window_ms as f64
    }

    fn advance(&mut self, now_ms: u64) -> Result<(), MeterError> {
        if let Some(last_ms) = self.last_ms {
            if now_ms < last_ms {
                return Err(MeterError::NonMonotoneTime { last_ms, now_ms });
            }
        }
        self.last_ms = Some(now_ms);
        let w = self.window_ms;
        for s in self.streams.values_mut() {
            s.evict(now_ms, w);
        }
        Ok(())
    }

    /// Records `bytes` on `stream_id` at `now_ms` and returns the stream's
    /// current rate in bits per second.
    pub fn record(&mut self, stream_id: &str, bytes: u64, now_ms: u64) -> Result<f64, MeterError> {
        self.advance(now_ms)?;
        let bucket = now_ms / self.window_ms;
        let s = self.streams.entry(stream_id.to_owned()).or_default();
        s.recent.push_back((now_ms, bytes));
        s.in_window += bytes;
        s.total_bytes += bytes;
        *s.buckets.entry(bucket).or_default() += bytes;
        let in_window = s.in_window;
        Ok(self.bits_per_s(in_window))
    }

    /// Declares a stream with no traffic yet so it shows up in reports.
    pub fn register(&mut self, stream_id: &str) {
        self.streams.entry(stream_id.to_owned()).or_default();
    }

    /// Sliding-window rate of one stream at `now_ms`; unknown streams read 0.
    pub fn rate(&mut self, stream_id: &str, now_ms: u64) -> Result<f64, MeterError> {
        self.advance(now_ms)?;
        Ok(self.streams.get(stream_id).map_or(0.0, |s| self.bits_per_s(s.in_window)))
    }

    /// Rate of all streams together.
    pub fn total_rate(&mut self, now_ms: u64) -> Result<f64, MeterError> {
        self.advance(now_ms)?;
        let bytes = self.streams.values().map(|s| s.in_window).sum();
        Ok(self.bits_per_s(bytes))
    }

    pub fn stream_ids(&self) -> impl Iterator<Item = &str> {
        self.streams.keys().map(String::as_str)
    }

    pub fn total_bytes(&self, stream_id: &str) -> u64 {
        self.streams.get(stream_id).map_or(0, |s| s.total_bytes)
    }

    /// Tumbling-window report covering `[0, end_ms)`. Windows with no traffic
    /// are reported as zero.
    pub fn rows(&self, end_ms: u64) -> Vec<RateRow> {
        let n_windows = end_ms.div_ceil(self.window_ms);
        let mut out = Vec::new();
        for (id, s) in &self.streams {
            for w in 0..n_windows {
                let bytes = s.buckets.get(&w).copied().unwrap_or(0);
                out.push(RateRow {
                    stream_id: id.clone(),
                    window_start_ms: w * self.window_ms,
                    bits_per_s: self.bits_per_s(bytes),
                });
            }
        }
        out
    }

    /// Highest tumbling-window rate a stream reached.
    pub fn max_window_rate(&self, stream_id: &str) -> f64 {
        self.streams
            .get(stream_id)
            .and_then(|s| s.buckets.values().max())
            .map_or(0.0, |&b| self.bits_per_s(b))
    }
}

pub const RATE_CSV_HEADER: [&str; 3] = ["stream_id", "window_start_ms", "bits_per_s"];

pub fn write_rate_csv<W: Write>(rows: &[RateRow], w: W) -> std::io::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(RATE_CSV_HEADER)?;
    for r in rows {
        out.write_record([r.stream_id.clone(), r.window_start_ms.to_string(), format!("{}", r.bits_per_s)])?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pose_stream_rate() {
        let mut m = BandwidthMeter::new(1000).unwrap();
        let mut rate = 0.0;
        // 30 Hz over more than a second; the window holds exactly 30 frames
        for k in 0..60u64 {
            rate = m.record("pose", 34, k * 1000 / 30).unwrap();
        }
        assert_eq!(rate, 8160.0);
    }

    #[test]
    fn video_stream_rate() {
        let mut m = BandwidthMeter::new(1000).unwrap();
        for k in 0..15u64 {
            m.record("video", 2500, k * 1000 / 15).unwrap();
        }
        assert_eq!(m.rate("video", 999).unwrap(), 300_000.0);
        assert_eq!(m.rows(1000)[0].bits_per_s, 300_000.0);
    }

    #[test]
    fn silence_reads_zero() {
        let mut m = BandwidthMeter::new(1000).unwrap();
        m.record("a", 100, 0).unwrap();
        assert_eq!(m.rate("a", 1000).unwrap(), 0.0);
        assert_eq!(m.rate("nobody", 1000).unwrap(), 0.0);
        let rows = m.rows(3000);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[2].bits_per_s, 0.0);
    }

    #[test]
    fn non_monotone_time() {
        let mut m = BandwidthMeter::new(1000).unwrap();
        m.record("a", 1, 10).unwrap();
        assert_eq!(m.record("a", 1, 9), Err(MeterError::NonMonotoneTime { last_ms: 10, now_ms: 9 }));
        assert_eq!(BandwidthMeter::new(0).unwrap_err(), MeterError::ZeroWindow);
    }

    #[test]
    fn csv_report() {
        let mut m = BandwidthMeter::new(500).unwrap();
        m.record("s", 125, 100).unwrap();
        let mut buf = Vec::new();
        write_rate_csv(&m.rows(500), &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "stream_id,window_start_ms,bits_per_s\ns,0,2000\n");
    }
}
