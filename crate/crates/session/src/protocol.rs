//! Wire protocol: one JSON object per text frame.
//!
//! Every frame is an envelope `{"session": id, "seq": n, "type": tag, ...}`
//! whose remaining fields depend on `type`. Sequence numbers increase
//! strictly per sender and connection.

use serde::{Deserialize, Serialize};
use siv_core::driver::EpisodeEnd;
use siv_core::env::Variant;
use siv_core::session_log::SessionSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<B> {
    pub session: String,
    pub seq: u64,
    #[serde(flatten)]
    pub body: B,
}

/// Client to server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientBody {
    Gesture {
        roll_deg: f64,
        present: bool,
    },
    Push,
    Start {
        #[serde(default)]
        config: StartOverrides,
    },
    Stop,
}

/// Per-session choices a client may make when starting; anything left out
/// comes from the server configuration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartOverrides {
    pub variant: Option<Variant>,
    pub master_seed: Option<u64>,
    pub run: Option<usize>,
}

/// Server to client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerBody {
    State(StateFrame),
    EpisodeEnd(EpisodeEnd),
    SessionSummary(SessionSummary),
    Heartbeat { uptime_ms: u64 },
    Error { message: String },
}

/// Everything a client needs to draw the scene after a tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub tick: u64,
    pub episode: usize,
    pub step: usize,
    pub p: usize,
    pub travel_steps: usize,
    pub grip: usize,
    pub grip_size: f64,
    pub n_grips: usize,
    pub object_size_visible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub object_size: Option<f64>,
    pub last_action: usize,
    pub last_reward: f64,
    /// Actions available on the next tick.
    pub mask: Vec<usize>,
    /// Absent in blind mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variant: Option<Variant>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_values: Option<Vec<f64>>,
    pub terminal: bool,
}

pub type ClientMessage = Envelope<ClientBody>;
pub type ServerMessage = Envelope<ServerBody>;

/// Parses one client frame. Unknown `type` tags and malformed fields are
/// errors, reported as readable text.
pub fn parse_client(text: &str) -> Result<ClientMessage, String> {
    let msg: ClientMessage = serde_json::from_str(text).map_err(|e| format!("malformed message: {e}"))?;
    if let ClientBody::Gesture { roll_deg, .. } = msg.body {
        if !(-180.0..=180.0).contains(&roll_deg) {
            return Err(format!("roll {roll_deg} outside [-180, 180]"));
        }
    }
    Ok(msg)
}
