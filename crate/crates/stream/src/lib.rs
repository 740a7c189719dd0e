//! Live, time-scaled event streams from a process model.
//!
//! A [`StreamSession`] keeps `2p` events buffered across `p` queues, emits
//! them at their scaled times to every TCP client, and accepts model swaps
//! and multiplier changes while running. [`control`] exposes the session
//! over HTTP.

pub mod buffer;
pub mod control;
pub mod session;
pub mod wire;

pub use control::ControlState;
pub use session::{
    BufferStats, SessionHandle, SessionStatus, StreamConfig, StreamError, StreamSession, SwapAck,
};
pub use wire::{EmissionFormat, WireEvent};
