//! Recorded sessions: newline-delimited JSON logs and their replay.
//!
//! A log opens with a header line, followed in tick order by gesture
//! samples `{t_ms, roll_deg, present}`, pushes `{t_ms, push: true}`, step
//! records and episode ends, and closes with a summary carrying the tick
//! count and a digest of the final weights. Timestamps are logical session
//! time: tick `k` runs at `k * tick_ms`, and an event consumed by tick `k`
//! carries a time in `((k - 1) * tick_ms, k * tick_ms]`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::driver::{CoderSpec, EpisodeEnd, TickReport, Trial};
use crate::env::{observe, EnvConfig, PushEvent, StepRecord, Variant};
use crate::error::{Result, SivError};
use crate::feedback::{drain_pushes, sample_at_tick, HandSample, HandState, HeldSamples, PushChannel, ReplaySource};
use crate::rl::AgentConfig;
use crate::seed::episode_seed;
use crate::user::{PreferenceTable, SyntheticUser, UserModelConfig};

pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionHeader {
    pub version: u32,
    pub session_id: String,
    pub variant: Variant,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub coding: CoderSpec,
    pub preferences: PreferenceTable,
    pub master_seed: u64,
    pub run: usize,
}

impl SessionHeader {
    pub fn episode_seed(&self, episode: usize) -> u64 {
        episode_seed(self.master_seed, self.variant.label(), self.run, episode)
    }

    pub fn trial(&self) -> Result<Trial> {
        Trial::new(self.variant, self.env.clone(), self.preferences.clone(), self.agent.clone(), self.coding)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSummary {
    pub ticks: u64,
    pub end_ms: u64,
    pub episodes: Vec<EpisodeEnd>,
    pub weight_digest: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PushLine {
    pub t_ms: u64,
    pub push: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaderLine {
    pub header: SessionHeader,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpisodeEndLine {
    pub episode_end: EpisodeEnd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryLine {
    pub summary: SessionSummary,
}

/// Any line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogLine {
    Header(HeaderLine),
    Summary(SummaryLine),
    EpisodeEnd(EpisodeEndLine),
    Sample(HandSample),
    Push(PushLine),
    Step(StepRecord),
}

/// Writes log lines, one JSON object per line.
#[derive(Debug)]
pub struct SessionLog<W: Write> {
    out: W,
}

impl<W: Write> SessionLog<W> {
    pub fn new(out: W) -> Self {
        SessionLog { out }
    }

    pub fn write(&mut self, line: &LogLine) -> Result<()> {
        serde_json::to_writer(&mut self.out, line)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush()?;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// The tick loop of a live session without its transport: holds gestures,
/// queues pushes, steps the trial once per tick and logs everything.
#[derive(Debug)]
pub struct SessionEngine<W: Write> {
    header: SessionHeader,
    trial: Trial,
    held: HeldSamples,
    pushes: PushChannel,
    log: SessionLog<W>,
    tick: u64,
    last_event_ms: u64,
    last_hand: HandState,
    episodes: Vec<EpisodeEnd>,
}

impl<W: Write> SessionEngine<W> {
    pub fn new(header: SessionHeader, out: W) -> Result<Self> {
        let mut trial = header.trial()?;
        trial.start_episode(0, header.episode_seed(0));
        let mut log = SessionLog::new(out);
        log.write(&LogLine::Header(HeaderLine { header: header.clone() }))?;
        Ok(SessionEngine {
            header,
            trial,
            held: HeldSamples::new(),
            pushes: PushChannel::new(),
            log,
            tick: 0,
            last_event_ms: 0,
            last_hand: HandState::ThumbsDown,
            episodes: Vec::new(),
        })
    }

    pub fn header(&self) -> &SessionHeader {
        &self.header
    }

    pub fn trial(&self) -> &Trial {
        &self.trial
    }

    /// Index of the next tick to run.
    pub fn ticks(&self) -> u64 {
        self.tick
    }

    pub fn episodes(&self) -> &[EpisodeEnd] {
        &self.episodes
    }

    /// Action values of the current scene under the most recent hand state.
    pub fn q_values(&self) -> Result<Vec<f64>> {
        let features = observe(self.trial.state(), self.header.variant, self.last_hand.value(), &self.header.env);
        self.trial.agent().q_values(&features)
    }

    fn tick_ms(&self) -> u64 {
        self.header.env.tick_ms
    }

    /// Logical time of an event arriving `offset_ms` after the previous
    /// tick ran; always inside the window of the next tick.
    pub fn logical_time(&self, offset_ms: u64) -> u64 {
        if self.tick == 0 {
            0
        } else {
            let prev = (self.tick - 1) * self.tick_ms();
            prev + 1 + offset_ms.min(self.tick_ms() - 1)
        }
    }

    /// Like [`logical_time`](Self::logical_time) but never earlier than the
    /// previously stamped event.
    fn stamp(&mut self, offset_ms: u64) -> u64 {
        let t = self.logical_time(offset_ms).max(self.last_event_ms);
        self.last_event_ms = t;
        t
    }

    pub fn offer_sample(&mut self, roll_deg: f64, present: bool, offset_ms: u64) -> Result<HandSample> {
        let sample = HandSample { t_ms: self.logical_time(offset_ms).max(self.last_event_ms), roll_deg, present };
        sample.validate()?;
        self.stamp(offset_ms);
        self.log.write(&LogLine::Sample(sample))?;
        self.held.feed(sample);
        Ok(sample)
    }

    pub fn offer_push(&mut self, offset_ms: u64) -> Result<PushEvent> {
        let event = PushEvent { t_ms: self.stamp(offset_ms) };
        self.log.write(&LogLine::Push(PushLine { t_ms: event.t_ms, push: true }))?;
        self.pushes.send(event);
        Ok(event)
    }

    /// Runs one decision. A finished episode is logged and the next one
    /// starts immediately.
    pub fn tick(&mut self) -> Result<TickReport> {
        let t_ms = self.tick * self.tick_ms();
        let hand = sample_at_tick(&mut self.held, t_ms)?;
        self.last_hand = hand;
        let push = drain_pushes(&mut self.pushes, t_ms);
        let report = self.trial.tick(hand, push, self.tick)?;
        self.log.write(&LogLine::Step(report.record.clone()))?;
        if let Some(end) = report.end {
            self.log.write(&LogLine::EpisodeEnd(EpisodeEndLine { episode_end: end }))?;
            self.episodes.push(end);
            let next = end.episode + 1;
            self.trial.start_episode(next, self.header.episode_seed(next));
        }
        self.tick += 1;
        Ok(report)
    }

    /// Writes the summary line and flushes the log.
    pub fn finish(mut self, reason: &str) -> Result<(SessionSummary, W)> {
        let summary = SessionSummary {
            ticks: self.tick,
            end_ms: self.tick.saturating_sub(1) * self.tick_ms(),
            episodes: self.episodes.clone(),
            weight_digest: self.trial.agent().weight_digest(),
            reason: reason.to_string(),
        };
        self.log.write(&LogLine::Summary(SummaryLine { summary: summary.clone() }))?;
        self.log.flush()?;
        Ok((summary, self.log.into_inner()))
    }
}

/// Parsed contents of a session log.
#[derive(Debug, Clone)]
pub struct SessionRecording {
    pub header: SessionHeader,
    pub samples: Vec<HandSample>,
    pub pushes: Vec<PushEvent>,
    pub steps: Vec<StepRecord>,
    pub summary: Option<SessionSummary>,
}

pub fn read_log<R: BufRead>(input: R) -> Result<SessionRecording> {
    let mut header = None;
    let mut samples = Vec::new();
    let mut pushes = Vec::new();
    let mut steps = Vec::new();
    let mut summary = None;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: LogLine = serde_json::from_str(&line).map_err(|e| SivError::Log { line: i + 1, reason: e.to_string() })?;
        match parsed {
            LogLine::Header(h) => {
                if h.header.version != LOG_VERSION {
                    return Err(SivError::Log { line: i + 1, reason: format!("unsupported version {}", h.header.version) });
                }
                header = Some(h.header);
            }
            LogLine::Sample(s) => {
                s.validate().map_err(|e| SivError::Log { line: i + 1, reason: e.to_string() })?;
                samples.push(s);
            }
            LogLine::Push(p) if p.push => pushes.push(PushEvent { t_ms: p.t_ms }),
            LogLine::Push(_) => {}
            LogLine::Step(s) => steps.push(s),
            LogLine::EpisodeEnd(_) => {}
            LogLine::Summary(s) => summary = Some(s.summary),
        }
    }
    let header = header.ok_or(SivError::Log { line: 0, reason: "missing header line".into() })?;
    Ok(SessionRecording { header, samples, pushes, steps, summary })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub ticks: u64,
    pub steps: Vec<StepRecord>,
    pub episodes: Vec<EpisodeEnd>,
    pub weight_digest: String,
}

/// Replays a recording headlessly. Fails on the first tick whose step record
/// differs from the recorded one, or when the final weights differ.
pub fn replay(recording: &SessionRecording) -> Result<ReplayReport> {
    let header = &recording.header;
    let tick_ms = header.env.tick_ms;
    let ticks = recording
        .summary
        .as_ref()
        .map_or(recording.steps.len() as u64, |s| s.ticks);
    let end_ms = ticks.saturating_sub(1) * tick_ms;
    let mut source = ReplaySource::new(recording.samples.clone(), end_ms)?;
    let mut pushes = PushChannel::new();
    for p in &recording.pushes {
        pushes.send(*p);
    }
    let mut trial = header.trial()?;
    trial.start_episode(0, header.episode_seed(0));
    let mut steps = Vec::with_capacity(ticks as usize);
    let mut episodes = Vec::new();
    for k in 0..ticks {
        let t_ms = k * tick_ms;
        let hand = sample_at_tick(&mut source, t_ms)?;
        let push = drain_pushes(&mut pushes, t_ms);
        let report = trial.tick(hand, push, k)?;
        if let Some(recorded) = recording.steps.get(k as usize) {
            if *recorded != report.record {
                return Err(SivError::ReplayMismatch(format!(
                    "tick {k}: recorded {recorded:?}, replayed {:?}",
                    report.record
                )));
            }
        }
        steps.push(report.record);
        if let Some(end) = report.end {
            episodes.push(end);
            trial.start_episode(end.episode + 1, header.episode_seed(end.episode + 1));
        }
    }
    if steps.len() != recording.steps.len() {
        return Err(SivError::ReplayMismatch(format!(
            "replayed {} steps, log holds {}",
            steps.len(),
            recording.steps.len()
        )));
    }
    let weight_digest = trial.agent().weight_digest();
    if let Some(summary) = &recording.summary {
        if summary.weight_digest != weight_digest {
            return Err(SivError::ReplayMismatch(format!(
                "final weights differ: recorded {}, replayed {weight_digest}",
                summary.weight_digest
            )));
        }
        if summary.episodes != episodes {
            return Err(SivError::ReplayMismatch("episode outcomes differ".into()));
        }
    }
    Ok(ReplayReport { ticks, steps, episodes, weight_digest })
}

/// Drives a [`SessionEngine`] for `ticks` ticks with a synthetic user
/// standing in for the remote client. Gestures and pushes arrive at
/// pseudo-random offsets inside each tick window, sometimes several per
/// window, the way a client streaming at roughly the tick rate would.
pub fn record_synthetic_session<W: Write>(
    header: SessionHeader,
    user_config: UserModelConfig,
    ticks: u64,
    out: W,
) -> Result<(SessionSummary, W)> {
    let mut engine = SessionEngine::new(header.clone(), out)?;
    let mut user = SyntheticUser::new(user_config.clone(), header.preferences.clone());
    user.begin_episode(user_config.seed);
    let mut jitter = user_config.seed ^ 0x9e37_79b9_7f4a_7c15;
    let mut next = move || {
        jitter ^= jitter << 13;
        jitter ^= jitter >> 7;
        jitter ^= jitter << 17;
        jitter
    };
    for _ in 0..ticks {
        let t_ms = engine.ticks() * header.env.tick_ms;
        let feedback = user.react(engine.trial().state(), t_ms);
        let copies = 1 + next() % 2;
        for _ in 0..copies {
            engine.offer_sample(feedback.sample.roll_deg, feedback.sample.present, next() % header.env.tick_ms)?;
        }
        if feedback.push.is_some() {
            let copies = 1 + next() % 3;
            for _ in 0..copies {
                engine.offer_push(next() % header.env.tick_ms)?;
            }
        }
        if next() % 50 == 0 {
            engine.offer_sample(0.0, false, next() % header.env.tick_ms)?;
        }
        engine.tick()?;
    }
    engine.finish("completed")
}
