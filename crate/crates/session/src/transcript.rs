//! JSON-lines session transcripts.
//!
//! One line per event fed to a peer's state machine, in the order it was
//! applied: `{"t_us": ..., "peer": ..., "event": {...}}`. Replaying the lines
//! against fresh states built from the same configs reproduces the run.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::PeerId;
use crate::session::{Event, SessionConfig, SessionError, SessionState};

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("event for unknown peer {0}")]
    UnknownPeer(PeerId),
    #[error("entry {index}: {source}")]
    Session { index: usize, source: SessionError },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub t_us: u64,
    pub peer: PeerId,
    pub event: Event,
}

pub fn write_jsonl<W: Write>(entries: &[TranscriptEntry], mut w: W) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TranscriptEntry>, TranscriptError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| TranscriptError::Parse { line: i + 1, source })?,
        );
    }
    Ok(out)
}

/// Feeds every entry to a fresh state per config and returns the final
/// states keyed by peer id.
pub fn replay(
    configs: &[SessionConfig],
    entries: &[TranscriptEntry],
) -> Result<BTreeMap<PeerId, SessionState>, TranscriptError> {
    let mut states = BTreeMap::new();
    for c in configs {
        let s =
            SessionState::new(c.clone()).map_err(|source| TranscriptError::Session { index: 0, source })?;
        states.insert(c.local_id, s);
    }
    for (index, e) in entries.iter().enumerate() {
        let s = states.get_mut(&e.peer).ok_or(TranscriptError::UnknownPeer(e.peer))?;
        s.apply(&e.event).map_err(|source| TranscriptError::Session { index, source })?;
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{Mode, SessionMessage};
    use crate::session::{Command, Phase};
    use huddle::Placement;

    fn config(id: PeerId, other: PeerId) -> SessionConfig {
        SessionConfig {
            local_id: id,
            display_name: format!("peer-{id}"),
            peers: [other].into(),
            placement: Placement::single(1.2).unwrap(),
            initial_mode: Mode::Avatar,
            join_timeout_ms: None,
        }
    }

    #[test]
    fn round_trip_and_replay() {
        let entries = vec![
            TranscriptEntry { t_us: 0, peer: 1, event: Event::Local(Command::Join) },
            TranscriptEntry {
                t_us: 20,
                peer: 1,
                event: Event::Remote {
                    from: 2,
                    message: SessionMessage::Join { peer_id: 2, display_name: "peer-2".into() },
                },
            },
        ];
        let mut buf = Vec::new();
        write_jsonl(&entries, &mut buf).unwrap();
        assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), 2);
        let back = read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, entries);
        let states = replay(&[config(1, 2), config(2, 1)], &back).unwrap();
        assert_eq!(states[&1].phase(), Phase::Active);
        assert_eq!(states[&2].phase(), Phase::Idle);
    }

    #[test]
    fn bad_line_reports_position() {
        let err = read_jsonl("\n{}\n".as_bytes()).unwrap_err();
        assert!(matches!(err, TranscriptError::Parse { line: 2, .. }));
    }
}
