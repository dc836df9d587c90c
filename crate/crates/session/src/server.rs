use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use siv_core::driver::CoderSpec;
use siv_core::env::{self, EnvConfig, Variant};
use siv_core::experiment::ExperimentSpec;
use siv_core::feedback::DropOldestQueue;
use siv_core::rl::AgentConfig;
use siv_core::session_log::{SessionEngine, SessionHeader, LOG_VERSION};
use siv_core::user::PreferenceTable;
use siv_core::SivError;
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, watch};
use tokio::task::{JoinHandle, JoinSet};
use tokio::time::{self, Instant, MissedTickBehavior};
use tokio_tungstenite::tungstenite::Message;

use crate::protocol::{parse_client, ClientBody, ServerBody, ServerMessage, StartOverrides, StateFrame};

/// Live sessions always tick at 10 Hz.
pub const TICK_MS: u64 = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub listen: SocketAddr,
    /// Directory receiving one `<session id>.ndjson` log per session.
    pub log_dir: PathBuf,
    pub variant: Variant,
    pub run: usize,
    pub master_seed: u64,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub coding: CoderSpec,
    pub preferences: Option<PreferenceTable>,
    /// Hide the variant label from clients.
    pub blind: bool,
    pub object_size_visible: bool,
    /// Include the agent's action values in state frames.
    pub show_q_values: bool,
    pub resume_timeout_ms: u64,
    pub heartbeat_ms: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            listen: SocketAddr::from(([127, 0, 0, 1], 8765)),
            log_dir: PathBuf::from("sessions"),
            variant: Variant::Siv,
            run: 0,
            master_seed: 0,
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            coding: CoderSpec::default(),
            preferences: None,
            blind: true,
            object_size_visible: true,
            show_q_values: false,
            resume_timeout_ms: 60_000,
            heartbeat_ms: 1_000,
        }
    }
}

impl SessionConfig {
    /// Takes the environment, learner and preferences of an experiment spec;
    /// the variant is the spec's first.
    pub fn from_spec(spec: &ExperimentSpec) -> Self {
        SessionConfig {
            variant: spec.variants.first().copied().unwrap_or(Variant::Siv),
            master_seed: spec.master_seed,
            env: spec.env.clone(),
            agent: spec.agent.clone(),
            coding: spec.coding,
            preferences: spec.preferences.clone(),
            ..SessionConfig::default()
        }
    }

    pub fn preference_table(&self) -> PreferenceTable {
        self.preferences.clone().unwrap_or_else(|| PreferenceTable::by_size(&self.env))
    }

    pub fn validate(&self) -> Result<(), SessionError> {
        let mut v = Vec::new();
        if self.env.tick_ms != TICK_MS {
            v.push(format!("tick period must be {TICK_MS} ms, got {}", self.env.tick_ms));
        }
        if self.heartbeat_ms == 0 {
            v.push("heartbeat period must be positive".into());
        }
        v.extend(self.env.violations());
        v.extend(self.agent.violations());
        if self.env.violations().is_empty() {
            v.extend(self.preference_table().violations(&self.env));
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(SessionError::Config(v.join("; ")))
        }
    }

    fn header(&self, id: &str, o: &StartOverrides) -> SessionHeader {
        SessionHeader {
            version: LOG_VERSION,
            session_id: id.to_string(),
            variant: o.variant.unwrap_or(self.variant),
            env: self.env.clone(),
            agent: self.agent.clone(),
            coding: self.coding,
            preferences: self.preference_table(),
            master_seed: o.master_seed.unwrap_or(self.master_seed),
            run: o.run.unwrap_or(self.run),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("cannot listen on {addr}: {source}")]
    Bind { addr: SocketAddr, source: std::io::Error },
    #[error("invalid session configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] SivError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

enum Control {
    Attach(mpsc::Sender<Outbound>),
    Detach,
    Stop(String),
}

enum Outbound {
    Bind(String),
    Body(ServerBody),
    Close,
}

#[derive(Clone, Copy)]
struct Gesture {
    at: Instant,
    roll_deg: f64,
    present: bool,
}

#[derive(Clone)]
struct Slot {
    control: mpsc::Sender<Control>,
    gestures: DropOldestQueue<Gesture>,
    pushes: DropOldestQueue<Instant>,
    attached: bool,
}

#[derive(Default)]
struct Shared {
    sessions: Mutex<HashMap<String, Slot>>,
    tasks: Mutex<Vec<JoinHandle<()>>>,
}

/// A running server. Dropping the handle leaves it running until the
/// runtime shuts down; call [`ServerHandle::shutdown`] to stop cleanly.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: watch::Sender<bool>,
    task: JoinHandle<()>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops accepting, ends every session with a summary and flushed log,
    /// and waits for all of it to finish.
    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        let _ = self.task.await;
    }
}

/// Binds the listen address and starts accepting clients.
pub async fn serve(config: SessionConfig) -> Result<ServerHandle, SessionError> {
    config.validate()?;
    std::fs::create_dir_all(&config.log_dir)?;
    let listener = TcpListener::bind(config.listen)
        .await
        .map_err(|source| SessionError::Bind { addr: config.listen, source })?;
    let addr = listener.local_addr()?;
    let (stop, mut stopped) = watch::channel(false);
    let shared = Arc::new(Shared::default());
    let config = Arc::new(config);
    let task = tokio::spawn(async move {
        let mut conns = JoinSet::new();
        loop {
            tokio::select! {
                _ = stopped.changed() => break,
                accepted = listener.accept() => match accepted {
                    Ok((stream, peer)) => {
                        log::debug!("connection from {peer}");
                        conns.spawn(connection(stream, Arc::clone(&shared), Arc::clone(&config)));
                    }
                    Err(e) => log::warn!("accept failed: {e}"),
                },
                Some(_) = conns.join_next(), if !conns.is_empty() => {}
            }
        }
        let controls: Vec<_> = shared.sessions.lock().unwrap().values().map(|s| s.control.clone()).collect();
        for c in controls {
            let _ = c.send(Control::Stop("server shutdown".into())).await;
        }
        let tasks = std::mem::take(&mut *shared.tasks.lock().unwrap());
        for t in tasks {
            let _ = t.await;
        }
        let _ = time::timeout(Duration::from_secs(1), async { while conns.join_next().await.is_some() {} }).await;
        conns.abort_all();
    });
    Ok(ServerHandle { addr, stop, task })
}

async fn connection(stream: TcpStream, shared: Arc<Shared>, config: Arc<SessionConfig>) {
    let ws = match tokio_tungstenite::accept_async(stream).await {
        Ok(ws) => ws,
        Err(e) => {
            log::debug!("handshake failed: {e}");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let (out, mut outbox) = mpsc::channel::<Outbound>(256);
    let heartbeat = Duration::from_millis(config.heartbeat_ms);
    let writer = tokio::spawn(async move {
        let opened = Instant::now();
        let mut session = String::new();
        let mut seq = 0u64;
        let mut beat = time::interval_at(Instant::now() + heartbeat, heartbeat);
        loop {
            let body = tokio::select! {
                msg = outbox.recv() => match msg {
                    Some(Outbound::Bind(id)) => {
                        session = id;
                        continue;
                    }
                    Some(Outbound::Body(body)) => body,
                    Some(Outbound::Close) | None => break,
                },
                _ = beat.tick() => ServerBody::Heartbeat { uptime_ms: opened.elapsed().as_millis() as u64 },
            };
            seq += 1;
            let frame = ServerMessage { session: session.clone(), seq, body };
            let text = serde_json::to_string(&frame).expect("server frames serialize");
            if sink.send(Message::text(text)).await.is_err() {
                return;
            }
        }
        let _ = sink.send(Message::Close(None)).await;
        let _ = sink.close().await;
    });

    let reply = |message: String| {
        let out = out.clone();
        async move {
            let _ = out.send(Outbound::Body(ServerBody::Error { message })).await;
        }
    };
    let mut bound: Option<(String, Slot)> = None;
    let mut last_seq: Option<u64> = None;
    while let Some(frame) = source.next().await {
        let text = match frame {
            Ok(Message::Text(t)) => t,
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(Message::Binary(_)) => {
                reply("binary frames are not supported".into()).await;
                continue;
            }
            Ok(_) => continue,
        };
        let msg = match parse_client(text.as_str()) {
            Ok(m) => m,
            Err(e) => {
                reply(e).await;
                continue;
            }
        };
        if let Some(prev) = last_seq {
            if msg.seq <= prev {
                reply(format!("sequence number {} does not follow {prev}", msg.seq)).await;
                continue;
            }
        }
        last_seq = Some(msg.seq);

        if bound.is_none() {
            match bind(&msg.session, &msg.body, &shared, &config, &out).await {
                Ok(slot) => {
                    bound = Some((msg.session.clone(), slot));
                    if matches!(msg.body, ClientBody::Start { .. }) {
                        continue;
                    }
                }
                Err(BindError::Busy) => {
                    reply(format!("session {} already has a client", msg.session)).await;
                    break;
                }
                Err(BindError::Refused(e)) => {
                    reply(e).await;
                    continue;
                }
            }
        }
        let (id, slot) = bound.as_ref().expect("bound above");
        if &msg.session != id {
            reply(format!("connection belongs to session {id}, not {}", msg.session)).await;
            continue;
        }
        match msg.body {
            ClientBody::Gesture { roll_deg, present } => {
                if slot.gestures.send(Gesture { at: Instant::now(), roll_deg, present }) {
                    log::warn!("session {id}: gesture queue full, oldest sample dropped");
                }
            }
            ClientBody::Push => {
                slot.pushes.send(Instant::now());
            }
            ClientBody::Start { .. } => reply(format!("session {id} is already running")).await,
            ClientBody::Stop => {
                let _ = slot.control.send(Control::Stop("stopped by client".into())).await;
            }
        }
    }

    if let Some((id, slot)) = bound {
        if let Some(s) = shared.sessions.lock().unwrap().get_mut(&id) {
            s.attached = false;
        }
        let _ = slot.control.send(Control::Detach).await;
    }
    let _ = out.send(Outbound::Close).await;
    drop(out);
    let _ = writer.await;
}

enum BindError {
    Busy,
    Refused(String),
}

/// Attaches the connection to an existing detached session, or creates the
/// session when the first frame is a start.
async fn bind(
    id: &str,
    body: &ClientBody,
    shared: &Arc<Shared>,
    config: &Arc<SessionConfig>,
    out: &mpsc::Sender<Outbound>,
) -> Result<Slot, BindError> {
    let existing = {
        let mut sessions = shared.sessions.lock().unwrap();
        match sessions.get_mut(id) {
            Some(s) if s.attached => return Err(BindError::Busy),
            Some(s) => {
                s.attached = true;
                Some(s.clone())
            }
            None => None,
        }
    };
    let slot = match existing {
        Some(slot) => slot,
        None => {
            let ClientBody::Start { config: overrides } = body else {
                return Err(BindError::Refused(format!("session {id} is not running; send start first")));
            };
            start_session(id, overrides, shared, config).map_err(|e| BindError::Refused(e.to_string()))?
        }
    };
    let _ = out.send(Outbound::Bind(id.to_string())).await;
    let _ = slot.control.send(Control::Attach(out.clone())).await;
    Ok(slot)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

fn log_path(dir: &Path, id: &str) -> PathBuf {
    let first = dir.join(format!("{id}.ndjson"));
    if !first.exists() {
        return first;
    }
    (1..)
        .map(|n| dir.join(format!("{id}-{n}.ndjson")))
        .find(|p| !p.exists())
        .expect("some suffix is free")
}

fn start_session(
    id: &str,
    overrides: &StartOverrides,
    shared: &Arc<Shared>,
    config: &Arc<SessionConfig>,
) -> Result<Slot, SessionError> {
    if !valid_id(id) {
        return Err(SessionError::Config(format!(
            "session id {id:?} must be 1-64 characters from [A-Za-z0-9_.-]"
        )));
    }
    let path = log_path(&config.log_dir, id);
    let file = BufWriter::new(File::create(&path)?);
    let engine = SessionEngine::new(config.header(id, overrides), file)?;
    log::info!("session {id} started, logging to {}", path.display());
    let (control, inbox) = mpsc::channel(16);
    let slot = Slot {
        control,
        gestures: DropOldestQueue::new(DropOldestQueue::<Gesture>::DEFAULT_CAPACITY),
        pushes: DropOldestQueue::new(DropOldestQueue::<Instant>::DEFAULT_CAPACITY),
        attached: true,
    };
    shared.sessions.lock().unwrap().insert(id.to_string(), slot.clone());
    let task = tokio::spawn(tick_loop(
        id.to_string(),
        engine,
        slot.clone(),
        inbox,
        Arc::clone(shared),
        Arc::clone(config),
    ));
    shared.tasks.lock().unwrap().push(task);
    Ok(slot)
}

async fn tick_loop(
    id: String,
    mut engine: SessionEngine<BufWriter<File>>,
    slot: Slot,
    mut inbox: mpsc::Receiver<Control>,
    shared: Arc<Shared>,
    config: Arc<SessionConfig>,
) {
    let period = Duration::from_millis(TICK_MS);
    let mut ticker = time::interval(period);
    ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
    let mut out: Option<mpsc::Sender<Outbound>> = None;
    let mut paused = true;
    let mut deadline: Option<Instant> = None;
    let mut last_tick = Instant::now();
    let mut last_frame: Option<StateFrame> = None;
    let reason = loop {
        tokio::select! {
            biased;
            control = inbox.recv() => match control {
                Some(Control::Attach(tx)) => {
                    if let Some(frame) = &last_frame {
                        let _ = tx.try_send(Outbound::Body(ServerBody::State(frame.clone())));
                    }
                    out = Some(tx);
                    if paused {
                        log::info!("session {id} running");
                    }
                    paused = false;
                    deadline = None;
                    ticker.reset_immediately();
                    last_tick = Instant::now();
                }
                Some(Control::Detach) => {
                    log::info!("session {id} paused, waiting {} ms for the client", config.resume_timeout_ms);
                    out = None;
                    paused = true;
                    deadline = Some(Instant::now() + Duration::from_millis(config.resume_timeout_ms));
                }
                Some(Control::Stop(reason)) => break reason,
                None => break "server gone".to_string(),
            },
            _ = time::sleep_until(deadline.unwrap_or_else(Instant::now)), if paused && deadline.is_some() => {
                break "client did not return".to_string();
            }
            scheduled = ticker.tick(), if !paused => {
                let now = Instant::now();
                let late = now.saturating_duration_since(scheduled);
                if late > period / 2 {
                    log::warn!("session {id}: tick {} ran {} ms late", engine.ticks(), late.as_millis());
                }
                let frames = match run_tick(&mut engine, &slot, last_tick, &config) {
                    Ok(f) => f,
                    Err(e) => {
                        send(&out, ServerBody::Error { message: e.to_string() });
                        break format!("fault: {e}");
                    }
                };
                last_tick = now;
                for f in frames {
                    if let ServerBody::State(s) = &f {
                        last_frame = Some(s.clone());
                    }
                    send(&out, f);
                }
            }
        }
    };
    shared.sessions.lock().unwrap().remove(&id);
    match engine.finish(&reason) {
        Ok((summary, _)) => {
            log::info!("session {id} ended after {} ticks: {reason}", summary.ticks);
            send(&out, ServerBody::SessionSummary(summary));
        }
        Err(e) => log::error!("session {id}: could not finish the log: {e}"),
    }
    if let Some(tx) = out {
        let _ = tx.send(Outbound::Close).await;
    }
}

fn send(out: &Option<mpsc::Sender<Outbound>>, body: ServerBody) {
    if let Some(tx) = out {
        if tx.try_send(Outbound::Body(body)).is_err() {
            log::warn!("client not keeping up, frame dropped");
        }
    }
}

/// Feeds everything that arrived since the last tick into the engine, runs
/// one tick and returns the frames to broadcast.
fn run_tick(
    engine: &mut SessionEngine<BufWriter<File>>,
    slot: &Slot,
    last_tick: Instant,
    config: &SessionConfig,
) -> Result<Vec<ServerBody>, SivError> {
    enum In {
        Gesture(f64, bool),
        Push,
    }
    let mut events: Vec<(Instant, In)> = slot
        .gestures
        .drain()
        .into_iter()
        .map(|g| (g.at, In::Gesture(g.roll_deg, g.present)))
        .chain(slot.pushes.drain().into_iter().map(|at| (at, In::Push)))
        .collect();
    events.sort_by_key(|e| e.0);
    for (at, event) in events {
        let offset = at.saturating_duration_since(last_tick).as_millis() as u64;
        match event {
            In::Gesture(roll, present) => {
                engine.offer_sample(roll, present, offset)?;
            }
            In::Push => {
                engine.offer_push(offset)?;
            }
        }
    }
    let report = engine.tick()?;
    let env_cfg = &engine.header().env;
    let state = &report.state;
    let mask = if state.terminal {
        Vec::new()
    } else {
        env::available_actions(state, env_cfg)?.iter().collect()
    };
    let frame = StateFrame {
        tick: report.record.tick,
        episode: report.record.episode,
        step: state.steps,
        p: state.position,
        travel_steps: env_cfg.travel_steps,
        grip: state.grip,
        grip_size: env_cfg.grip_sizes[state.grip],
        n_grips: env_cfg.n_grips(),
        object_size_visible: config.object_size_visible,
        object_size: config.object_size_visible.then_some(state.object_size),
        last_action: report.record.action,
        last_reward: report.record.reward,
        mask,
        variant: (!config.blind).then_some(engine.header().variant),
        q_values: if config.show_q_values { Some(engine.q_values()?) } else { None },
        terminal: state.terminal,
    };
    let mut frames = vec![ServerBody::State(frame)];
    if let Some(end) = report.end {
        frames.push(ServerBody::EpisodeEnd(end));
    }
    Ok(frames)
}
