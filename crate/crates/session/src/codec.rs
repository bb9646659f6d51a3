//! Wire format.
//!
//! Every message is framed as
//!
//! ```text
//! u32 payload_len | u8 tag | payload (payload_len bytes)
//! ```
//!
//! All integers and floats are little-endian. Payloads by tag:
//!
//! | tag | message          | payload                                                        |
//! |-----|------------------|----------------------------------------------------------------|
//! | 1   | Join             | u32 peer_id, u16 name_len, name (UTF-8)                        |
//! | 2   | ModeSet          | u8 mode                                                        |
//! | 3   | PoseFrame        | u32 timestamp_ms, u8 joint_count, joint_count × 3 × f32        |
//! | 4   | VideoFrame       | u32 timestamp_ms, u16 width, u16 height, u8 pixel_format, blob |
//! | 5   | PlacementUpdate  | f64 radian_deg, f64 radius_m, u8 n_remote, u8 flags            |
//! | 6   | Leave            | u32 peer_id                                                    |
//! | 7   | ModeAck          | u8 mode                                                        |
//! | 8   | Close            | u8 reason                                                      |
//!
//! Modes: 0 Avatar, 1 VideoGrid, 2 VideoAvatar. Pixel formats: 0 RGB,
//! 1 RGBA matted. PlacementUpdate flag bit 0 marks the spread angle as
//! applicable. The video blob runs to the end of the payload and is opaque.

use huddle::{PixelFormat, Placement};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type PeerId = u32;

pub const HEADER_LEN: usize = 5;
pub const MAX_PAYLOAD_LEN: usize = 16 * 1024 * 1024;
pub const POSE_HEADER_LEN: usize = 5;
pub const VIDEO_HEADER_LEN: usize = 9;
pub const JOINT_LEN: usize = 12;

pub const JOINT_LEFT_WRIST: usize = 0;
pub const JOINT_RIGHT_WRIST: usize = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unknown message type {0}")]
    UnknownType(u8),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invariant violation: {0}")]
    InvariantViolation(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Avatar,
    VideoGrid,
    VideoAvatar,
}

impl Mode {
    pub fn tag(self) -> u8 {
        match self {
            Mode::Avatar => 0,
            Mode::VideoGrid => 1,
            Mode::VideoAvatar => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Mode::Avatar),
            1 => Some(Mode::VideoGrid),
            2 => Some(Mode::VideoAvatar),
            _ => None,
        }
    }

    /// Pixel format carried by video frames in this mode.
    pub fn video_format(self) -> Option<PixelFormat> {
        match self {
            Mode::Avatar => None,
            Mode::VideoGrid => Some(PixelFormat::Rgb),
            Mode::VideoAvatar => Some(PixelFormat::RgbaMatted),
        }
    }

    /// Whether a media message may be sent in this mode.
    pub fn admits(self, msg: &SessionMessage) -> bool {
        match msg {
            SessionMessage::PoseFrame { .. } => self == Mode::Avatar,
            SessionMessage::VideoFrame { pixel_format, .. } => self.video_format() == Some(*pixel_format),
            _ => true,
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "avatar" => Ok(Mode::Avatar),
            "video-grid" => Ok(Mode::VideoGrid),
            "video-avatar" => Ok(Mode::VideoAvatar),
            _ => Err(format!("unknown mode {s:?} (avatar, video-grid, video-avatar)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Avatar => "avatar",
            Mode::VideoGrid => "video-grid",
            Mode::VideoAvatar => "video-avatar",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseReason {
    Normal,
    ProtocolViolation,
}

impl CloseReason {
    fn tag(self) -> u8 {
        match self {
            CloseReason::Normal => 0,
            CloseReason::ProtocolViolation => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(CloseReason::Normal),
            1 => Some(CloseReason::ProtocolViolation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SessionMessage {
    Join {
        peer_id: PeerId,
        display_name: String,
    },
    ModeSet {
        mode: Mode,
    },
    PoseFrame {
        timestamp_ms: u32,
        /// Joint positions in meters; index 0 left wrist, 1 right wrist.
        joints: Vec<[f32; 3]>,
    },
    VideoFrame {
        timestamp_ms: u32,
        width: u16,
        height: u16,
        pixel_format: PixelFormat,
        #[serde(with = "hex_bytes")]
        payload: Vec<u8>,
    },
    PlacementUpdate {
        placement: Placement,
        n_remote: u8,
    },
    Leave {
        peer_id: PeerId,
    },
    ModeAck {
        mode: Mode,
    },
    Close {
        reason: CloseReason,
    },
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

impl SessionMessage {
    pub fn tag(&self) -> u8 {
        match self {
            SessionMessage::Join { .. } => 1,
            SessionMessage::ModeSet { .. } => 2,
            SessionMessage::PoseFrame { .. } => 3,
            SessionMessage::VideoFrame { .. } => 4,
            SessionMessage::PlacementUpdate { .. } => 5,
            SessionMessage::Leave { .. } => 6,
            SessionMessage::ModeAck { .. } => 7,
            SessionMessage::Close { .. } => 8,
        }
    }

    pub fn is_media(&self) -> bool {
        matches!(self, SessionMessage::PoseFrame { .. } | SessionMessage::VideoFrame { .. })
    }

    /// Size of the payload once encoded, without the 5-byte header.
    pub fn payload_len(&self) -> usize {
        match self {
            SessionMessage::Join { display_name, .. } => 4 + 2 + display_name.len(),
            SessionMessage::ModeSet { .. } | SessionMessage::ModeAck { .. } => 1,
            SessionMessage::PoseFrame { joints, .. } => POSE_HEADER_LEN + JOINT_LEN * joints.len(),
            SessionMessage::VideoFrame { payload, .. } => VIDEO_HEADER_LEN + payload.len(),
            SessionMessage::PlacementUpdate { .. } => 18,
            SessionMessage::Leave { .. } => 4,
            SessionMessage::Close { .. } => 1,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload_len()
    }

    pub fn validate(&self) -> Result<(), CodecError> {
        let bad = |m: String| Err(CodecError::InvariantViolation(m));
        match self {
            SessionMessage::Join { display_name, .. } if display_name.len() > usize::from(u16::MAX) => {
                bad(format!("display name of {} bytes exceeds u16", display_name.len()))
            }
            SessionMessage::PoseFrame { joints, .. } => {
                if joints.is_empty() || joints.len() > usize::from(u8::MAX) {
                    return bad(format!("joint_count must be 1..=255, got {}", joints.len()));
                }
                if joints.iter().flatten().any(|v| !v.is_finite()) {
                    return bad("non-finite joint coordinate".into());
                }
                Ok(())
            }
            SessionMessage::VideoFrame { payload, .. }
                if payload.len() > MAX_PAYLOAD_LEN - VIDEO_HEADER_LEN =>
            {
                bad("video payload too large".into())
            }
            SessionMessage::PlacementUpdate { placement, n_remote } => {
                if *n_remote == 0 {
                    return bad("n_remote must be at least 1".into());
                }
                placement.validate().or_else(|e| bad(e.to_string()))
            }
            _ => Ok(()),
        }
    }
}

pub fn encode(msg: &SessionMessage) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(msg.encoded_len());
    encode_into(msg, &mut out)?;
    Ok(out)
}

pub fn encode_into(msg: &SessionMessage, out: &mut Vec<u8>) -> Result<(), CodecError> {
    msg.validate()?;
    let len = msg.payload_len();
    out.extend_from_slice(&(len as u32).to_le_bytes());
    out.push(msg.tag());
    match msg {
        SessionMessage::Join { peer_id, display_name } => {
            out.extend_from_slice(&peer_id.to_le_bytes());
            out.extend_from_slice(&(display_name.len() as u16).to_le_bytes());
            out.extend_from_slice(display_name.as_bytes());
        }
        SessionMessage::ModeSet { mode } | SessionMessage::ModeAck { mode } => out.push(mode.tag()),
        SessionMessage::PoseFrame { timestamp_ms, joints } => {
            out.extend_from_slice(&timestamp_ms.to_le_bytes());
            out.push(joints.len() as u8);
            for v in joints.iter().flatten() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        SessionMessage::VideoFrame { timestamp_ms, width, height, pixel_format, payload } => {
            out.extend_from_slice(&timestamp_ms.to_le_bytes());
            out.extend_from_slice(&width.to_le_bytes());
            out.extend_from_slice(&height.to_le_bytes());
            out.push(pixel_format.tag());
            out.extend_from_slice(payload);
        }
        SessionMessage::PlacementUpdate { placement, n_remote } => {
            out.extend_from_slice(&placement.radian_deg.to_le_bytes());
            out.extend_from_slice(&placement.radius_m.to_le_bytes());
            out.push(*n_remote);
            out.push(u8::from(placement.radian_applicable));
        }
        SessionMessage::Leave { peer_id } => out.extend_from_slice(&peer_id.to_le_bytes()),
        SessionMessage::Close { reason } => out.push(reason.tag()),
    }
    Ok(())
}

/// Decodes exactly one framed message occupying the whole buffer.
pub fn decode(bytes: &[u8]) -> Result<SessionMessage, CodecError> {
    let (msg, used) = decode_frame(bytes)?;
    if used != bytes.len() {
        return Err(CodecError::LengthMismatch(format!("{} trailing bytes after frame", bytes.len() - used)));
    }
    Ok(msg)
}

/// Decodes the first framed message of `bytes`, returning it with the
/// number of bytes consumed.
pub fn decode_frame(bytes: &[u8]) -> Result<(SessionMessage, usize), CodecError> {
    if bytes.len() < HEADER_LEN {
        return Err(CodecError::Truncated { needed: HEADER_LEN, available: bytes.len() });
    }
    let len = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD_LEN {
        return Err(CodecError::LengthMismatch(format!("declared payload {len} exceeds maximum")));
    }
    let tag = bytes[4];
    let total = HEADER_LEN + len;
    if bytes.len() < total {
        return Err(CodecError::Truncated { needed: total, available: bytes.len() });
    }
    let msg = decode_payload(tag, &bytes[HEADER_LEN..total])?;
    Ok((msg, total))
}

struct Reader<'a> {
    buf: &'a [u8],
    tag: u8,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() < n {
            return Err(CodecError::LengthMismatch(format!(
                "type {} payload ends early: need {n} more bytes, have {}",
                self.tag,
                self.buf.len()
            )));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.array()?))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    fn rest(&mut self) -> &'a [u8] {
        std::mem::take(&mut self.buf)
    }

    fn finish(&self) -> Result<(), CodecError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(CodecError::LengthMismatch(format!(
                "type {} payload has {} unexpected trailing bytes",
                self.tag,
                self.buf.len()
            )))
        }
    }
}

fn mode(tag: u8) -> Result<Mode, CodecError> {
    Mode::from_tag(tag).ok_or_else(|| CodecError::InvariantViolation(format!("unknown mode {tag}")))
}

fn decode_payload(tag: u8, payload: &[u8]) -> Result<SessionMessage, CodecError> {
    let mut r = Reader { buf: payload, tag };
    let msg = match tag {
        1 => {
            let peer_id = r.u32()?;
            let n = usize::from(r.u16()?);
            let name = r.take(n)?;
            let display_name = std::str::from_utf8(name)
                .map_err(|_| CodecError::InvariantViolation("display name is not UTF-8".into()))?
                .to_owned();
            SessionMessage::Join { peer_id, display_name }
        }
        2 => SessionMessage::ModeSet { mode: mode(r.u8()?)? },
        3 => {
            let timestamp_ms = r.u32()?;
            let count = usize::from(r.u8()?);
            if r.buf.len() != count * JOINT_LEN {
                return Err(CodecError::LengthMismatch(format!(
                    "{count} joints need {} bytes, payload carries {}",
                    count * JOINT_LEN,
                    r.buf.len()
                )));
            }
            let mut joints = Vec::with_capacity(count);
            for _ in 0..count {
                joints.push([r.f32()?, r.f32()?, r.f32()?]);
            }
            SessionMessage::PoseFrame { timestamp_ms, joints }
        }
        4 => {
            let timestamp_ms = r.u32()?;
            let width = r.u16()?;
            let height = r.u16()?;
            let f = r.u8()?;
            let pixel_format = PixelFormat::from_tag(f)
                .ok_or_else(|| CodecError::InvariantViolation(format!("unknown pixel format {f}")))?;
            let payload = r.rest().to_vec();
            SessionMessage::VideoFrame { timestamp_ms, width, height, pixel_format, payload }
        }
        5 => {
            let radian_deg = r.f64()?;
            let radius_m = r.f64()?;
            let n_remote = r.u8()?;
            let flags = r.u8()?;
            if flags & !1 != 0 {
                return Err(CodecError::InvariantViolation(format!("unknown placement flags {flags:#x}")));
            }
            let placement = Placement { radian_deg, radius_m, radian_applicable: flags & 1 == 1 };
            SessionMessage::PlacementUpdate { placement, n_remote }
        }
        6 => SessionMessage::Leave { peer_id: r.u32()? },
        7 => SessionMessage::ModeAck { mode: mode(r.u8()?)? },
        8 => {
            let t = r.u8()?;
            let reason = CloseReason::from_tag(t)
                .ok_or_else(|| CodecError::InvariantViolation(format!("unknown close reason {t}")))?;
            SessionMessage::Close { reason }
        }
        other => return Err(CodecError::UnknownType(other)),
    };
    r.finish()?;
    msg.validate()?;
    Ok(msg)
}

/// Reassembles messages from a byte stream delivered in arbitrary chunks.
#[derive(Debug, Default, Clone)]
pub struct StreamDecoder {
    buf: Vec<u8>,
}

impl StreamDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete message, `None` while one is still partial.
    pub fn next_message(&mut self) -> Option<Result<SessionMessage, CodecError>> {
        match decode_frame(&self.buf) {
            Ok((msg, used)) => {
                self.buf.drain(..used);
                Some(Ok(msg))
            }
            Err(CodecError::Truncated { .. }) => None,
            Err(e) => {
                // The stream cannot be resynchronized after a corrupt frame.
                self.buf.clear();
                Some(Err(e))
            }
        }
    }

    pub fn drain(&mut self) -> Result<Vec<SessionMessage>, CodecError> {
        let mut out = Vec::new();
        while let Some(m) = self.next_message() {
            out.push(m?);
        }
        Ok(out)
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pose2() -> SessionMessage {
        SessionMessage::PoseFrame { timestamp_ms: 1234, joints: vec![[0.1, 1.2, 0.3], [-0.1, 1.2, 0.3]] }
    }

    #[test]
    fn pose_frame_sizes() {
        let bytes = encode(&pose2()).unwrap();
        assert_eq!(pose2().payload_len(), 29);
        assert_eq!(bytes.len(), 34);
        assert_eq!(&bytes[0..4], &29u32.to_le_bytes());
        assert_eq!(bytes[4], 3);
        assert_eq!(&bytes[5..9], &1234u32.to_le_bytes());
        assert_eq!(bytes[9], 2);
        assert_eq!(&bytes[10..14], &0.1f32.to_le_bytes());
        assert_eq!(decode(&bytes).unwrap(), pose2());
    }

    #[test]
    fn golden_join() {
        let m = SessionMessage::Join { peer_id: 7, display_name: "ab".into() };
        assert_eq!(encode(&m).unwrap(), vec![8, 0, 0, 0, 1, 7, 0, 0, 0, 2, 0, b'a', b'b']);
    }

    #[test]
    fn golden_placement_update() {
        let p = Placement::new(60.0, 1.0).unwrap();
        let bytes = encode(&SessionMessage::PlacementUpdate { placement: p, n_remote: 2 }).unwrap();
        assert_eq!(bytes.len(), 23);
        assert_eq!(&bytes[5..13], &60.0f64.to_le_bytes());
        assert_eq!(&bytes[13..21], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[21..], &[2, 1]);
    }

    #[test]
    fn truncated() {
        let bytes = encode(&pose2()).unwrap();
        assert!(matches!(decode(&bytes[..3]), Err(CodecError::Truncated { .. })));
        assert!(matches!(decode(&bytes[..20]), Err(CodecError::Truncated { needed: 34, available: 20 })));
        let mut long = bytes.clone();
        long[0] = 200;
        assert!(matches!(decode(&long), Err(CodecError::Truncated { .. })));
    }

    #[test]
    fn unknown_type() {
        assert_eq!(decode(&[0, 0, 0, 0, 99]), Err(CodecError::UnknownType(99)));
    }

    #[test]
    fn length_mismatch() {
        // pose frame declaring 3 joints but carrying 2
        let mut bytes = encode(&pose2()).unwrap();
        bytes[9] = 3;
        assert!(matches!(decode(&bytes), Err(CodecError::LengthMismatch(_))));
        // mode frame with an extra byte
        assert!(matches!(decode(&[2, 0, 0, 0, 2, 0, 0]), Err(CodecError::LengthMismatch(_))));
        // trailing garbage after a complete frame
        let mut bytes = encode(&SessionMessage::Leave { peer_id: 1 }).unwrap();
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(CodecError::LengthMismatch(_))));
    }

    #[test]
    fn invariant_violations() {
        let empty = SessionMessage::PoseFrame { timestamp_ms: 0, joints: vec![] };
        assert!(matches!(encode(&empty), Err(CodecError::InvariantViolation(_))));
        assert!(matches!(decode(&[5, 0, 0, 0, 3, 0, 0, 0, 0, 0]), Err(CodecError::InvariantViolation(_))));
        assert!(matches!(decode(&[1, 0, 0, 0, 2, 9]), Err(CodecError::InvariantViolation(_))));
        let nan = SessionMessage::PoseFrame { timestamp_ms: 0, joints: vec![[f32::NAN, 0.0, 0.0]] };
        assert!(matches!(encode(&nan), Err(CodecError::InvariantViolation(_))));
        // name length overruns the payload
        let bad_name = [7, 0, 0, 0, 1, 1, 0, 0, 0, 5, 0, b'a'];
        assert!(matches!(decode(&bad_name), Err(CodecError::LengthMismatch(_))));
        let bad_utf8 = [7, 0, 0, 0, 1, 1, 0, 0, 0, 1, 0, 0xff];
        assert!(matches!(decode(&bad_utf8), Err(CodecError::InvariantViolation(_))));
    }

    #[test]
    fn stream_decoder_handles_split_frames() {
        let msgs = vec![
            SessionMessage::Join { peer_id: 1, display_name: "peer-1".into() },
            pose2(),
            SessionMessage::ModeSet { mode: Mode::VideoAvatar },
        ];
        let mut bytes = Vec::new();
        for m in &msgs {
            encode_into(m, &mut bytes).unwrap();
        }
        let mut dec = StreamDecoder::new();
        let mut out = Vec::new();
        for b in &bytes {
            dec.push(std::slice::from_ref(b));
            out.extend(dec.drain().unwrap());
        }
        assert_eq!(out, msgs);
        assert_eq!(dec.buffered(), 0);
    }

    #[test]
    fn mode_admission() {
        let rgb = SessionMessage::VideoFrame {
            timestamp_ms: 0,
            width: 2,
            height: 2,
            pixel_format: PixelFormat::Rgb,
            payload: vec![1, 2, 3],
        };
        assert!(Mode::VideoGrid.admits(&rgb));
        assert!(!Mode::VideoAvatar.admits(&rgb));
        assert!(!Mode::Avatar.admits(&rgb));
        assert!(Mode::Avatar.admits(&pose2()));
        assert!(!Mode::VideoAvatar.admits(&pose2()));
    }

    #[test]
    fn json_form_uses_hex_payload() {
        let m = SessionMessage::VideoFrame {
            timestamp_ms: 5,
            width: 1,
            height: 1,
            pixel_format: PixelFormat::RgbaMatted,
            payload: vec![0xde, 0xad],
        };
        let j = serde_json::to_string(&m).unwrap();
        assert!(j.contains(r#""payload":"dead""#));
        assert!(j.contains(r#""type":"video_frame""#));
        assert_eq!(serde_json::from_str::<SessionMessage>(&j).unwrap(), m);
    }
}
