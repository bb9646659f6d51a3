//! Full-mesh session simulation over in-memory links.
//!
//! Peers `1..=N` join at time zero over links with seeded latency jitter.
//! Once peer 1 has converged it switches the session to the requested mode.
//! Every active peer then streams media to every other peer: two wrist
//! joints at 30 Hz in avatar mode, fixed-size video frames otherwise. Each
//! stream is paced against its mode's budget and metered on the wire.
//!
//! The simulation is event driven with microsecond timestamps, so a run is
//! a pure function of its config.

use std::collections::BTreeMap;

use huddle::{ModelError, ModelTable, Placement};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{
    encode, CodecError, Mode, PeerId, SessionMessage, StreamDecoder, HEADER_LEN, VIDEO_HEADER_LEN,
};
use crate::link::{simulated_link, LinkEnd};
use crate::meter::{BandwidthMeter, MeterError, RateRow};
use crate::pacer::{Decision, Pacer};
use crate::session::{Command, Event, Outbound, SessionConfig, SessionError, SessionState};
use crate::transcript::TranscriptEntry;

pub const AVATAR_BUDGET_BPS: u64 = 10_000;
pub const VIDEO_BUDGET_BPS: u64 = 300_000;
pub const POSE_FPS: u32 = 30;
pub const POSE_JOINTS: usize = 2;
pub const DEFAULT_VIDEO_FPS: u32 = 15;
/// 2500 bytes at 15 Hz is exactly the video budget.
pub const DEFAULT_VIDEO_FRAME_BYTES: usize = 2500;
pub const VIDEO_WIDTH: u16 = 160;
pub const VIDEO_HEIGHT: u16 = 120;
/// Display FoV whose predicted placement each peer advertises.
pub const DEFAULT_FOV_DEG: f64 = 50.0;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Meter(#[from] MeterError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub peers: usize,
    pub mode: Mode,
    pub duration_s: f64,
    pub seed: u64,
    /// Media frame rate in the target mode; defaults to 30 (avatar) or 15.
    pub fps: Option<u32>,
    /// Total on-wire size of each video frame, header included.
    pub frame_bytes: Option<usize>,
    pub latency_ms: u64,
    pub jitter_ms: u64,
    pub window_ms: u64,
    pub fov_deg: f64,
    pub record_transcript: bool,
}

impl SimConfig {
    pub fn new(peers: usize, mode: Mode, duration_s: f64, seed: u64) -> Self {
        Self {
            peers,
            mode,
            duration_s,
            seed,
            fps: None,
            frame_bytes: None,
            latency_ms: 20,
            jitter_ms: 5,
            window_ms: 1000,
            fov_deg: DEFAULT_FOV_DEG,
            record_transcript: false,
        }
    }

    pub fn media_fps(&self, mode: Mode) -> u32 {
        match (mode, self.fps) {
            (m, Some(f)) if m == self.mode => f,
            (Mode::Avatar, _) => POSE_FPS,
            _ => DEFAULT_VIDEO_FPS,
        }
    }

    pub fn video_frame_bytes(&self) -> usize {
        self.frame_bytes.unwrap_or(DEFAULT_VIDEO_FRAME_BYTES)
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.into()));
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return bad("duration must be positive");
        }
        if self.fps == Some(0) {
            return bad("fps must be positive");
        }
        if self.window_ms == 0 {
            return bad("window must be positive");
        }
        if let Some(b) = self.frame_bytes {
            if self.mode == Mode::Avatar {
                return bad("frame bytes only apply to video modes");
            }
            if b < HEADER_LEN + VIDEO_HEADER_LEN {
                return bad("video frames need at least 14 bytes");
            }
        }
        Ok(())
    }

    /// Session configs the simulation uses, one per peer.
    pub fn session_configs(&self) -> Result<Vec<SessionConfig>, SimError> {
        if self.peers < 2 {
            // let the state machine reject it with its own error
            let cfg = SessionConfig {
                local_id: 1,
                display_name: "peer-1".into(),
                peers: Default::default(),
                placement: Placement::single(1.0).expect("valid"),
                initial_mode: Mode::Avatar,
                join_timeout_ms: None,
            };
            cfg.validate()?;
        }
        let placement = ModelTable::builtin().predict(self.fov_deg, self.peers - 1)?.placement;
        let ids: Vec<PeerId> = (1..=self.peers as PeerId).collect();
        Ok(ids
            .iter()
            .map(|&id| SessionConfig {
                local_id: id,
                display_name: format!("peer-{id}"),
                peers: ids.iter().copied().filter(|&p| p != id).collect(),
                placement,
                initial_mode: Mode::Avatar,
                join_timeout_ms: None,
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Pose,
    Video,
}

impl StreamKind {
    fn of(mode: Mode) -> Self {
        if mode == Mode::Avatar {
            StreamKind::Pose
        } else {
            StreamKind::Video
        }
    }

    pub fn budget_bps(self) -> u64 {
        match self {
            StreamKind::Pose => AVATAR_BUDGET_BPS,
            StreamKind::Video => VIDEO_BUDGET_BPS,
        }
    }
}

pub fn stream_id(from: PeerId, to: PeerId, kind: StreamKind) -> String {
    let k = match kind {
        StreamKind::Pose => "pose",
        StreamKind::Video => "video",
    };
    format!("{from}->{to}/{k}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub stream_id: String,
    pub from: PeerId,
    pub to: PeerId,
    pub kind: StreamKind,
    pub offered: u64,
    pub sent: u64,
    pub dropped: u64,
    pub frame_bytes: u64,
    pub mean_bits_per_s: f64,
    pub max_window_bits_per_s: f64,
    pub budget_bits_per_s: u64,
    pub starved: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerSummary {
    pub peer: PeerId,
    pub phase: crate::session::Phase,
    pub mode: Mode,
    pub remote_placements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub peers: usize,
    pub mode: Mode,
    pub duration_s: f64,
    pub seed: u64,
    pub fps: u32,
    pub window_ms: u64,
    pub converged: bool,
    pub peer_states: Vec<PeerSummary>,
    pub streams: Vec<StreamSummary>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct SimReport {
    pub summary: SimSummary,
    pub rates: Vec<RateRow>,
    pub configs: Vec<SessionConfig>,
    pub states: Vec<SessionState>,
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Default)]
struct StreamStats {
    offered: u64,
    frame_bytes: u64,
    first_us: u64,
    last_us: u64,
    interval_us: u64,
}

struct MediaClock {
    mode: Mode,
    start_us: u64,
    fps: u64,
    k: u64,
}

impl MediaClock {
    fn due_us(&self) -> u64 {
        self.start_us + (self.k * 1_000_000).div_ceil(self.fps)
    }
}

struct Sim<'a> {
    cfg: &'a SimConfig,
    states: Vec<SessionState>,
    links: BTreeMap<(PeerId, PeerId), LinkEnd>,
    decoders: BTreeMap<(PeerId, PeerId), StreamDecoder>,
    clocks: Vec<Option<MediaClock>>,
    pacers: BTreeMap<(PeerId, PeerId, StreamKind), Pacer>,
    stats: BTreeMap<(PeerId, PeerId, StreamKind), StreamStats>,
    meter: BandwidthMeter,
    rngs: Vec<ChaCha8Rng>,
    transcript: Vec<TranscriptEntry>,
    mode_requested: bool,
}

impl Sim<'_> {
    fn idx(id: PeerId) -> usize {
        id as usize - 1
    }

    fn apply(&mut self, peer: PeerId, event: Event, t_us: u64) -> Result<(), SimError> {
        let out = self.states[Self::idx(peer)].apply(&event)?;
        if self.cfg.record_transcript {
            self.transcript.push(TranscriptEntry { t_us, peer, event });
        }
        for Outbound { to, message } in out.outbound {
            self.send(peer, to, &message, t_us)?;
        }
        Ok(())
    }

    fn send(&mut self, from: PeerId, to: PeerId, msg: &SessionMessage, t_us: u64) -> Result<(), SimError> {
        let bytes = encode(msg)?;
        self.links[&(from, to)].send(&bytes, t_us);
        Ok(())
    }

    fn next_arrival(&self) -> Option<u64> {
        self.links.values().filter_map(LinkEnd::next_arrival_us).min()
    }

    fn deliver(&mut self, t_us: u64) -> Result<(), SimError> {
        // `links[(x, y)]` is x's end toward y, so it reads what y wrote
        let pairs: Vec<(PeerId, PeerId)> = self.links.keys().copied().collect();
        for (reader, writer) in pairs {
            let bytes = self.links[&(reader, writer)].recv(t_us);
            if bytes.is_empty() {
                continue;
            }
            let dec = self.decoders.entry((writer, reader)).or_default();
            dec.push(&bytes);
            let msgs = dec.drain()?;
            for message in msgs {
                self.apply(reader, Event::Remote { from: writer, message }, t_us)?;
            }
        }
        Ok(())
    }

    fn host_switch(&mut self, t_us: u64) -> Result<(), SimError> {
        let host = &self.states[0];
        if !self.mode_requested
            && host.converged()
            && host.pending().is_none()
            && host.mode() != self.cfg.mode
        {
            self.mode_requested = true;
            self.apply(1, Event::Local(Command::SetMode { mode: self.cfg.mode }), t_us)?;
        }
        Ok(())
    }

    fn next_media(&self) -> Option<u64> {
        self.clocks.iter().flatten().map(MediaClock::due_us).min()
    }

    fn media(&mut self, t_us: u64) -> Result<(), SimError> {
        for i in 0..self.states.len() {
            let state = &self.states[i];
            if !state.can_send_media() {
                self.clocks[i] = None;
                continue;
            }
            let mode = state.mode();
            if self.clocks[i].as_ref().is_none_or(|c| c.mode != mode) {
                let fps = u64::from(self.cfg.media_fps(mode));
                self.clocks[i] = Some(MediaClock { mode, start_us: t_us, fps, k: 0 });
            }
            while let Some(clock) = self.clocks[i].as_mut().filter(|c| c.due_us() <= t_us) {
                let interval_us = 1_000_000u64.div_ceil(clock.fps);
                clock.k += 1;
                self.emit(i, mode, interval_us, t_us)?;
            }
        }
        Ok(())
    }

    fn frame(&mut self, i: usize, mode: Mode, t_us: u64) -> SessionMessage {
        let rng = &mut self.rngs[i];
        let timestamp_ms = (t_us / 1000) as u32;
        match mode.video_format() {
            None => {
                let phase = t_us as f32 * 1e-6 * std::f32::consts::TAU * 0.5;
                let joints = (0..POSE_JOINTS)
                    .map(|j| {
                        let side = if j == 0 { -0.25 } else { 0.25 };
                        [side, 1.0 + 0.1 * phase.sin(), 0.3 + rng.gen_range(-0.01..0.01)]
                    })
                    .collect();
                SessionMessage::PoseFrame { timestamp_ms, joints }
            }
            Some(pixel_format) => {
                let mut payload = vec![0u8; self.cfg.video_frame_bytes() - HEADER_LEN - VIDEO_HEADER_LEN];
                rng.fill(payload.as_mut_slice());
                SessionMessage::VideoFrame {
                    timestamp_ms,
                    width: VIDEO_WIDTH,
                    height: VIDEO_HEIGHT,
                    pixel_format,
                    payload,
                }
            }
        }
    }

    fn emit(&mut self, i: usize, mode: Mode, interval_us: u64, t_us: u64) -> Result<(), SimError> {
        let from = self.states[i].local_id();
        let kind = StreamKind::of(mode);
        let msg = self.frame(i, mode, t_us);
        let bytes = encode(&msg)?;
        let size = bytes.len() as u64;
        let targets: Vec<PeerId> = self.states[i].peer_ids().collect();
        for to in targets {
            let key = (from, to, kind);
            let st =
                self.stats.entry(key).or_insert_with(|| StreamStats { first_us: t_us, ..Default::default() });
            st.offered += 1;
            st.frame_bytes = size;
            st.last_us = t_us;
            st.interval_us = interval_us;
            let id = stream_id(from, to, kind);
            self.meter.register(&id);
            let pacer = self.pacers.entry(key).or_insert_with(|| Pacer::for_frames(kind.budget_bps(), size));
            if pacer.offer(size, t_us) == Decision::Send {
                self.links[&(from, to)].send(&bytes, t_us);
                self.meter.record(&id, size, t_us / 1000)?;
            }
        }
        Ok(())
    }
}

pub fn run(cfg: &SimConfig) -> Result<SimReport, SimError> {
    cfg.validate()?;
    let configs = cfg.session_configs()?;
    let states = configs.iter().map(|c| SessionState::new(c.clone())).collect::<Result<Vec<_>, _>>()?;
    let n = states.len();

    let mut links = BTreeMap::new();
    for a in 1..=n as PeerId {
        for b in a + 1..=n as PeerId {
            let seed = cfg.seed ^ (u64::from(a) << 32 | u64::from(b)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let (ea, eb) = simulated_link(cfg.latency_ms, cfg.jitter_ms, seed);
            links.insert((a, b), ea);
            links.insert((b, a), eb);
        }
    }
    let rngs = (0..n)
        .map(|i| {
            let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
            r.set_stream(1000 + i as u64);
            r
        })
        .collect();

    let mut sim = Sim {
        cfg,
        states,
        links,
        decoders: BTreeMap::new(),
        clocks: (0..n).map(|_| None).collect(),
        pacers: BTreeMap::new(),
        stats: BTreeMap::new(),
        meter: BandwidthMeter::new(cfg.window_ms)?,
        rngs,
        transcript: Vec::new(),
        mode_requested: false,
    };

    let end_us = (cfg.duration_s * 1e6).round() as u64;
    for id in 1..=n as PeerId {
        sim.apply(id, Event::Local(Command::Join), 0)?;
    }
    let mut t = 0;
    loop {
        sim.deliver(t)?;
        sim.host_switch(t)?;
        sim.media(t)?;
        match [sim.next_arrival(), sim.next_media()].into_iter().flatten().min() {
            Some(next) if next < end_us => t = next,
            _ => break,
        }
    }

    let end_ms = end_us.div_ceil(1000);
    let rates = sim.meter.rows(end_ms);
    let mut streams = Vec::new();
    for (&(from, to, kind), st) in &sim.stats {
        let id = stream_id(from, to, kind);
        let ps = sim.pacers[&(from, to, kind)].stats().clone();
        let lifetime_us = (st.last_us - st.first_us + st.interval_us).min(end_us - st.first_us).max(1);
        let mean = (ps.sent_bytes * 8) as f64 * 1e6 / lifetime_us as f64;
        let max_window = sim.meter.max_window_rate(&id);
        let budget = kind.budget_bps();
        let within = match kind {
            StreamKind::Pose => max_window < budget as f64,
            StreamKind::Video => max_window <= (budget + 8 * st.frame_bytes) as f64,
        };
        streams.push(StreamSummary {
            stream_id: id,
            from,
            to,
            kind,
            offered: st.offered,
            sent: ps.sent,
            dropped: ps.dropped,
            frame_bytes: st.frame_bytes,
            mean_bits_per_s: mean,
            max_window_bits_per_s: max_window,
            budget_bits_per_s: budget,
            starved: ps.starved,
            pass: within && !ps.starved,
        });
    }

    let peer_states: Vec<PeerSummary> = sim
        .states
        .iter()
        .map(|s| PeerSummary {
            peer: s.local_id(),
            phase: s.phase(),
            mode: s.mode(),
            remote_placements: s.placements().len(),
        })
        .collect();
    let converged = sim.states.iter().all(|s| s.converged() && s.mode() == cfg.mode);
    let target_streams = streams.iter().any(|s| s.kind == StreamKind::of(cfg.mode));
    let pass = converged && target_streams && streams.iter().all(|s| s.pass);

    let summary = SimSummary {
        peers: n,
        mode: cfg.mode,
        duration_s: cfg.duration_s,
        seed: cfg.seed,
        fps: cfg.media_fps(cfg.mode),
        window_ms: cfg.window_ms,
        converged,
        peer_states,
        streams,
        pass,
    };
    Ok(SimReport { summary, rates, configs, states: sim.states, transcript: sim.transcript })
}
