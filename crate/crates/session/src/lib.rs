//! Session layer for multi-party avatar conversations: a bit-exact wire
//! format, a symmetric full-mesh session state machine, and an in-memory
//! transport harness with pacing and bandwidth accounting.

pub mod codec;
pub mod link;
pub mod meter;
pub mod pacer;
pub mod session;
pub mod sim;
pub mod transcript;

pub use codec::{decode, decode_frame, encode, CodecError, Mode, PeerId, SessionMessage, StreamDecoder};
pub use link::{simulated_link, LinkEnd};
pub use meter::{BandwidthMeter, MeterError, RateRow};
pub use pacer::{Decision, Pacer};
pub use session::{
    step, Command, Event, Outbound, Phase, SessionConfig, SessionError, SessionState, StepOutput,
};
pub use sim::{run as simulate, SimConfig, SimError, SimReport, SimSummary};
pub use transcript::{replay, TranscriptEntry};
