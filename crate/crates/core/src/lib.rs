//! Interactive grip-preference learning.
//!
//! A SARSA(λ) agent with tile-coded linear action values learns which grip
//! a user prefers for each object. Besides explicit negative-reward pushes,
//! the agent can perceive the user's thumbs-up/thumbs-down hand state as a
//! state feature. [`experiment`] compares agents that see the object size,
//! the hand state, or neither against a scripted user; [`session_log`]
//! records and replays live sessions.

pub mod driver;
pub mod env;
pub mod error;
pub mod experiment;
pub mod feedback;
pub mod rl;
pub mod seed;
pub mod session_log;
pub mod user;

pub use error::{Result, SivError};
