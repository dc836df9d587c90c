//! Live sessions: a human steers the grip learner over a WebSocket.
//!
//! Each session runs its own 10 Hz tick loop around a
//! [`siv_core::session_log::SessionEngine`]. Gesture samples and reward
//! pushes from the client are queued until the next tick, a state frame is
//! sent after every step, and the whole session is logged so it can be
//! replayed headlessly.

pub mod protocol;
mod server;

pub use server::{serve, ServerHandle, SessionConfig, SessionError, TICK_MS};
