//! Symmetric full-mesh session state machine.
//!
//! Every peer runs the same machine. A peer becomes `Active` once it has
//! sent its own `Join` and received a `Join` from every configured peer; it
//! then advertises its placement to everyone. Mode changes are two-phase:
//! the proposer broadcasts `ModeSet`, every other peer answers with a
//! broadcast `ModeAck`, and each peer commits the new mode once it has heard
//! from all of its peers (a `ModeSet` counts as its sender's ack). Concurrent
//! proposals are resolved in favor of the lowest proposer id.
//!
//! While a change is pending, media of both the old and the new mode is
//! accepted. Senders hold their media until the change commits.

use std::collections::{BTreeMap, BTreeSet};

use huddle::Placement;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{CloseReason, Mode, PeerId, SessionMessage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("command {command} not allowed in phase {phase:?}")]
    InvalidCommand { command: &'static str, phase: Phase },
    #[error("a mode change to {0} is already pending")]
    ModeChangePending(Mode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    Joining,
    Active,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub local_id: PeerId,
    pub display_name: String,
    /// Remote peers expected in the mesh, excluding the local peer.
    pub peers: BTreeSet<PeerId>,
    /// Placement advertised to remote peers once active.
    pub placement: Placement,
    pub initial_mode: Mode,
    /// Give up joining after this long, measured from the local `Join`.
    #[serde(default)]
    pub join_timeout_ms: Option<u64>,
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        if self.peers.is_empty() {
            return Err(SessionError::InvalidConfig("a session needs at least 2 peers".into()));
        }
        if self.peers.contains(&self.local_id) {
            return Err(SessionError::InvalidConfig(format!(
                "local id {} listed among remote peers",
                self.local_id
            )));
        }
        if self.peers.len() > usize::from(u8::MAX) {
            return Err(SessionError::InvalidConfig("at most 255 remote peers".into()));
        }
        if self.display_name.len() > usize::from(u16::MAX) {
            return Err(SessionError::InvalidConfig("display name too long".into()));
        }
        self.placement.validate().map_err(|e| SessionError::InvalidConfig(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    Join,
    SetMode { mode: Mode },
    Leave,
    Tick { now_ms: u64 },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Join => "join",
            Command::SetMode { .. } => "set_mode",
            Command::Leave => "leave",
            Command::Tick { .. } => "tick",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Local(Command),
    Remote { from: PeerId, message: SessionMessage },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outbound {
    pub to: PeerId,
    pub message: SessionMessage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Notice {
    PeerJoined { peer: PeerId },
    BecameActive,
    ModeProposed { mode: Mode, proposer: PeerId },
    ModeCommitted { mode: Mode },
    PeerLeft { peer: PeerId },
    PeerDropped { peer: PeerId, reason: String },
    MediaAccepted { from: PeerId },
    Ignored { from: PeerId, reason: String },
    JoinTimedOut,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub outbound: Vec<Outbound>,
    pub notices: Vec<Notice>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemotePlacement {
    pub placement: Placement,
    pub n_remote: u8,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PeerInfo {
    pub joined: bool,
    pub display_name: Option<String>,
    pub placement: Option<RemotePlacement>,
    pub media_frames: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingMode {
    pub mode: Mode,
    pub proposer: PeerId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    config: SessionConfig,
    phase: Phase,
    mode: Mode,
    pending: Option<PendingMode>,
    /// Latest mode each peer has acknowledged, possibly ahead of the
    /// matching proposal.
    acks: BTreeMap<PeerId, Mode>,
    peers: BTreeMap<PeerId, PeerInfo>,
    /// Peers that left or were dropped; their traffic is ignored.
    departed: BTreeSet<PeerId>,
    joined_at_ms: Option<u64>,
    now_ms: u64,
}

impl SessionState {
    pub fn new(config: SessionConfig) -> Result<Self, SessionError> {
        config.validate()?;
        let peers = config.peers.iter().map(|&p| (p, PeerInfo::default())).collect();
        Ok(Self {
            mode: config.initial_mode,
            config,
            phase: Phase::Idle,
            pending: None,
            acks: BTreeMap::new(),
            peers,
            departed: BTreeSet::new(),
            joined_at_ms: None,
            now_ms: 0,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn local_id(&self) -> PeerId {
        self.config.local_id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn pending(&self) -> Option<&PendingMode> {
        self.pending.as_ref()
    }

    pub fn peers(&self) -> &BTreeMap<PeerId, PeerInfo> {
        &self.peers
    }

    pub fn peer_ids(&self) -> impl Iterator<Item = PeerId> + '_ {
        self.peers.keys().copied()
    }

    pub fn joined_peers(&self) -> usize {
        self.peers.values().filter(|p| p.joined).count()
    }

    pub fn placements(&self) -> BTreeMap<PeerId, &RemotePlacement> {
        self.peers.iter().filter_map(|(&id, p)| p.placement.as_ref().map(|pl| (id, pl))).collect()
    }

    /// Active and holding a placement from every remaining peer.
    pub fn converged(&self) -> bool {
        self.phase == Phase::Active && self.peers.values().all(|p| p.placement.is_some())
    }

    /// Whether the local peer should be sending media right now.
    pub fn can_send_media(&self) -> bool {
        self.phase == Phase::Active && self.pending.is_none() && !self.peers.is_empty()
    }

    /// Applies an event in place. Local commands that are not allowed in the
    /// current state are rejected without changing anything.
    pub fn apply(&mut self, event: &Event) -> Result<StepOutput, SessionError> {
        let mut out = StepOutput::default();
        match event {
            Event::Local(cmd) => self.local(*cmd, &mut out)?,
            Event::Remote { from, message } => self.remote(*from, message, &mut out),
        }
        Ok(out)
    }

    fn broadcast(&self, message: SessionMessage, out: &mut StepOutput) {
        for &to in self.peers.keys() {
            out.outbound.push(Outbound { to, message: message.clone() });
        }
    }

    fn local(&mut self, cmd: Command, out: &mut StepOutput) -> Result<(), SessionError> {
        let reject = |phase| Err(SessionError::InvalidCommand { command: cmd.name(), phase });
        match cmd {
            Command::Join => {
                if self.phase != Phase::Idle {
                    return reject(self.phase);
                }
                self.phase = Phase::Joining;
                self.joined_at_ms = Some(self.now_ms);
                self.broadcast(
                    SessionMessage::Join {
                        peer_id: self.config.local_id,
                        display_name: self.config.display_name.clone(),
                    },
                    out,
                );
                self.maybe_activate(out);
            }
            Command::SetMode { mode } => {
                if self.phase != Phase::Active {
                    return reject(self.phase);
                }
                if let Some(p) = &self.pending {
                    return Err(SessionError::ModeChangePending(p.mode));
                }
                self.pending = Some(PendingMode { mode, proposer: self.config.local_id });
                out.notices.push(Notice::ModeProposed { mode, proposer: self.config.local_id });
                self.broadcast(SessionMessage::ModeSet { mode }, out);
                self.maybe_commit(out);
            }
            Command::Leave => {
                if self.phase == Phase::Closed {
                    return reject(self.phase);
                }
                if self.phase != Phase::Idle {
                    self.broadcast(SessionMessage::Leave { peer_id: self.config.local_id }, out);
                }
                self.close();
            }
            Command::Tick { now_ms } => {
                self.now_ms = self.now_ms.max(now_ms);
                if let (Phase::Joining, Some(timeout), Some(start)) =
                    (self.phase, self.config.join_timeout_ms, self.joined_at_ms)
                {
                    if self.now_ms.saturating_sub(start) >= timeout {
                        self.broadcast(SessionMessage::Leave { peer_id: self.config.local_id }, out);
                        out.notices.push(Notice::JoinTimedOut);
                        self.close();
                    }
                }
            }
        }
        Ok(())
    }

    fn close(&mut self) {
        self.phase = Phase::Closed;
        self.pending = None;
        self.acks.clear();
    }

    fn violation(&mut self, from: PeerId, reason: String, out: &mut StepOutput) {
        out.outbound.push(Outbound {
            to: from,
            message: SessionMessage::Close { reason: CloseReason::ProtocolViolation },
        });
        self.remove_peer(from);
        out.notices.push(Notice::PeerDropped { peer: from, reason });
        self.after_membership_change(out);
    }

    fn remove_peer(&mut self, peer: PeerId) {
        self.peers.remove(&peer);
        self.acks.remove(&peer);
        self.departed.insert(peer);
    }

    fn after_membership_change(&mut self, out: &mut StepOutput) {
        match self.phase {
            Phase::Joining => self.maybe_activate(out),
            Phase::Active => self.maybe_commit(out),
            _ => {}
        }
    }

    fn maybe_activate(&mut self, out: &mut StepOutput) {
        if self.phase != Phase::Joining || !self.peers.values().all(|p| p.joined) {
            return;
        }
        self.phase = Phase::Active;
        out.notices.push(Notice::BecameActive);
        self.broadcast(
            SessionMessage::PlacementUpdate {
                placement: self.config.placement,
                n_remote: self.config.peers.len() as u8,
            },
            out,
        );
    }

    fn maybe_commit(&mut self, out: &mut StepOutput) {
        let Some(pending) = &self.pending else { return };
        let all_acked =
            self.peers.keys().all(|p| *p == pending.proposer || self.acks.get(p) == Some(&pending.mode));
        if all_acked {
            self.mode = pending.mode;
            self.pending = None;
            self.acks.clear();
            out.notices.push(Notice::ModeCommitted { mode: self.mode });
        }
    }

    fn remote(&mut self, from: PeerId, msg: &SessionMessage, out: &mut StepOutput) {
        if self.phase == Phase::Closed || self.departed.contains(&from) {
            out.notices.push(Notice::Ignored { from, reason: "session closed or peer departed".into() });
            return;
        }
        if !self.peers.contains_key(&from) {
            out.outbound.push(Outbound {
                to: from,
                message: SessionMessage::Close { reason: CloseReason::ProtocolViolation },
            });
            self.departed.insert(from);
            out.notices.push(Notice::PeerDropped { peer: from, reason: "not a configured peer".into() });
            return;
        }
        let joined = self.peers[&from].joined;

        match msg {
            SessionMessage::Join { peer_id, display_name } => {
                if *peer_id != from {
                    return self.violation(from, format!("join claims id {peer_id}"), out);
                }
                let info = self.peers.get_mut(&from).expect("checked");
                if info.joined {
                    out.notices.push(Notice::Ignored { from, reason: "duplicate join".into() });
                    return;
                }
                info.joined = true;
                info.display_name = Some(display_name.clone());
                out.notices.push(Notice::PeerJoined { peer: from });
                self.maybe_activate(out);
            }
            SessionMessage::Leave { peer_id } => {
                if *peer_id != from {
                    return self.violation(from, format!("leave claims id {peer_id}"), out);
                }
                self.remove_peer(from);
                out.notices.push(Notice::PeerLeft { peer: from });
                self.after_membership_change(out);
            }
            SessionMessage::Close { reason } => {
                self.remove_peer(from);
                out.notices
                    .push(Notice::PeerDropped { peer: from, reason: format!("closed by peer ({reason:?})") });
                self.after_membership_change(out);
            }
            SessionMessage::PlacementUpdate { placement, n_remote } => {
                if !joined || self.phase == Phase::Idle {
                    return self.violation(from, "placement before join".into(), out);
                }
                let info = self.peers.get_mut(&from).expect("checked");
                info.placement = Some(RemotePlacement { placement: *placement, n_remote: *n_remote });
            }
            SessionMessage::ModeSet { mode } => {
                if self.phase != Phase::Active {
                    return self.violation(from, "mode change before active".into(), out);
                }
                let mode = *mode;
                let adopt = match &self.pending {
                    None => true,
                    Some(p) => from < p.proposer,
                };
                if !adopt {
                    out.notices.push(Notice::Ignored { from, reason: "competing mode proposal lost".into() });
                    return;
                }
                self.pending = Some(PendingMode { mode, proposer: from });
                self.acks.insert(from, mode);
                out.notices.push(Notice::ModeProposed { mode, proposer: from });
                self.broadcast(SessionMessage::ModeAck { mode }, out);
                self.maybe_commit(out);
            }
            SessionMessage::ModeAck { mode } => {
                if self.phase != Phase::Active {
                    return self.violation(from, "mode ack before active".into(), out);
                }
                self.acks.insert(from, *mode);
                self.maybe_commit(out);
            }
            SessionMessage::PoseFrame { .. } | SessionMessage::VideoFrame { .. } => {
                let live = matches!(self.phase, Phase::Active | Phase::Joining) && joined;
                if !live {
                    return self.violation(from, format!("media in phase {:?}", self.phase), out);
                }
                let admitted =
                    self.mode.admits(msg) || self.pending.as_ref().is_some_and(|p| p.mode.admits(msg));
                if !admitted {
                    return self.violation(from, format!("media does not match mode {}", self.mode), out);
                }
                self.peers.get_mut(&from).expect("checked").media_frames += 1;
                out.notices.push(Notice::MediaAccepted { from });
            }
        }
    }
}

/// Pure form of [`SessionState::apply`]: the input state is left untouched.
pub fn step(state: &SessionState, event: &Event) -> Result<(SessionState, StepOutput), SessionError> {
    let mut next = state.clone();
    let out = next.apply(event)?;
    Ok((next, out))
}
