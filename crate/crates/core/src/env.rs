//! Episodic grip-selection task.
//!
//! The arm shuttles between the grip-changing station (`p = 0`) and the
//! object (`p = D`). Grips can only be changed at the station. Reaching the
//! object with a grip the [`GraspRule`] accepts ends the episode; any other
//! arrival leaves the arm at the object. An explicit push costs the
//! configured (negative) reward and forces the arm back to the station.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SivError};
use crate::rl::{ActionMask, Dimension, FeatureBounds, FeatureVector, TilingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Grip apertures, strictly increasing, in [0, 1].
    pub grip_sizes: Vec<f64>,
    pub object_sizes: Vec<f64>,
    /// Number of forward moves from the station to the object.
    pub travel_steps: usize,
    pub push_reward: f64,
    /// Wall-clock tick period of live sessions; informational when headless.
    pub tick_ms: u64,
    /// Steps after which an episode is cut off and recorded as truncated.
    pub episode_cap: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            grip_sizes: uniform_grips(4),
            object_sizes: vec![0.2, 0.9],
            travel_steps: 5,
            push_reward: -1.0,
            tick_ms: 100,
            episode_cap: 1000,
        }
    }
}

/// `n` apertures evenly spaced up to 1.0.
pub fn uniform_grips(n: usize) -> Vec<f64> {
    (1..=n).map(|k| k as f64 / n as f64).collect()
}

impl EnvConfig {
    pub fn n_grips(&self) -> usize {
        self.grip_sizes.len()
    }

    /// Grips followed by forward and backward.
    pub fn n_actions(&self) -> usize {
        self.n_grips() + 2
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_grips() < 2 {
            out.push(format!("need at least 2 grips, got {}", self.n_grips()));
        }
        if self.n_actions() > ActionMask::MAX_ACTIONS {
            out.push(format!("too many grips ({})", self.n_grips()));
        }
        if self.grip_sizes.windows(2).any(|w| w[0] >= w[1]) {
            out.push("grip sizes must be strictly increasing".into());
        }
        if self.grip_sizes.iter().any(|g| !(0.0..=1.0).contains(g)) {
            out.push("grip sizes must lie in [0, 1]".into());
        }
        if self.object_sizes.is_empty() {
            out.push("object size set is empty".into());
        }
        if self.object_sizes.iter().any(|o| !(0.0..=1.0).contains(o)) {
            out.push("object sizes must lie in [0, 1]".into());
        }
        if self.travel_steps < 1 {
            out.push("travel steps must be at least 1".into());
        }
        if !(self.push_reward.is_finite() && self.push_reward < 0.0) {
            out.push(format!("push reward must be negative, got {}", self.push_reward));
        }
        if self.episode_cap < 1 {
            out.push("episode cap must be at least 1".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(SivError::Config(v.join("; ")))
        }
    }

    pub fn forward(&self) -> usize {
        self.n_grips()
    }

    pub fn backward(&self) -> usize {
        self.n_grips() + 1
    }

    pub fn action(&self, index: usize) -> Result<Action> {
        let n = self.n_grips();
        match index {
            k if k < n => Ok(Action::Grip(k)),
            k if k == n => Ok(Action::Forward),
            k if k == n + 1 => Ok(Action::Backward),
            k => Err(SivError::Contract(format!("action index {k} out of range"))),
        }
    }

    pub fn action_index(&self, action: Action) -> usize {
        match action {
            Action::Grip(k) => k,
            Action::Forward => self.forward(),
            Action::Backward => self.backward(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Grip(usize),
    /// One step toward the object.
    Forward,
    /// One step toward the station.
    Backward,
}

/// Decides whether a grip successfully grasps an object.
pub trait GraspRule {
    fn success(&self, grip: usize, object_size: f64) -> bool;
}

impl<F: Fn(usize, f64) -> bool> GraspRule for F {
    fn success(&self, grip: usize, object_size: f64) -> bool {
        self(grip, object_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub position: usize,
    pub grip: usize,
    pub object_size: f64,
    pub retreat: bool,
    pub steps: usize,
    pub terminal: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvEvent {
    GripChanged,
    Moved,
    GraspSuccess,
    GraspFailed,
    PushPenalized,
}

/// An explicit negative-reward request from the user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PushEvent {
    pub t_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub reward: f64,
    pub terminal: bool,
    pub events: Vec<EnvEvent>,
}

/// Starts an episode at the station with a random grip and object.
pub fn reset<R: Rng + ?Sized>(config: &EnvConfig, rng: &mut R) -> EnvState {
    let grip = rng.gen_range(0..config.n_grips());
    let object_size = config.object_sizes[rng.gen_range(0..config.object_sizes.len())];
    EnvState {
        position: 0,
        grip,
        object_size,
        retreat: false,
        steps: 0,
        terminal: false,
    }
}

pub fn available_actions(state: &EnvState, config: &EnvConfig) -> Result<ActionMask> {
    if state.terminal {
        return Err(SivError::Contract("no actions are available in a terminal state".into()));
    }
    let n = config.n_actions();
    let mask = if state.retreat {
        ActionMask::from_actions(n, [config.backward()])
    } else if state.position == 0 {
        ActionMask::from_actions(n, (0..config.n_grips()).chain([config.forward()]))
    } else {
        ActionMask::from_actions(n, [config.forward(), config.backward()])
    };
    Ok(mask)
}

/// Advances the task by one tick. At most one push is consumed per step.
pub fn step(
    state: &EnvState,
    action: usize,
    push: Option<PushEvent>,
    config: &EnvConfig,
    rule: &dyn GraspRule,
) -> Result<StepOutcome> {
    let mask = available_actions(state, config)?;
    if !mask.contains(action) {
        return Err(SivError::Contract(format!(
            "action {:?} is not available at p = {} (retreat = {})",
            config.action(action)?,
            state.position,
            state.retreat
        )));
    }
    let mut next = state.clone();
    let mut events = Vec::new();
    match config.action(action)? {
        Action::Grip(k) => {
            if k != next.grip {
                next.grip = k;
                events.push(EnvEvent::GripChanged);
            }
        }
        Action::Forward => {
            if next.position < config.travel_steps {
                next.position += 1;
                events.push(EnvEvent::Moved);
            }
            if next.position == config.travel_steps {
                if rule.success(next.grip, next.object_size) {
                    next.terminal = true;
                    events.push(EnvEvent::GraspSuccess);
                } else {
                    events.push(EnvEvent::GraspFailed);
                }
            }
        }
        Action::Backward => {
            next.position -= 1;
            events.push(EnvEvent::Moved);
            if next.position == 0 {
                next.retreat = false;
            }
        }
    }
    let mut reward = 0.0;
    if push.is_some() {
        reward = config.push_reward;
        events.push(EnvEvent::PushPenalized);
        if !next.terminal && next.position > 0 {
            next.retreat = true;
        }
    }
    next.steps += 1;
    Ok(StepOutcome {
        terminal: next.terminal,
        state: next,
        reward,
        events,
    })
}

/// Which state features the agent perceives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Grip size and object size.
    Baseline,
    /// Grip size and the valued hand state.
    Siv,
    /// Grip size only.
    NoSiv,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Baseline, Variant::Siv, Variant::NoSiv];

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::Siv => "siv",
            Variant::NoSiv => "no_siv",
        }
    }

    pub fn feature_len(&self) -> usize {
        match self {
            Variant::Baseline | Variant::Siv => 3,
            Variant::NoSiv => 2,
        }
    }

    /// Tile coder for this variant's features: grip and hand state are
    /// discrete, object size is continuous with `tiles` tiles.
    pub fn coder(&self, config: &EnvConfig, tilings: usize, tiles: usize) -> Result<TilingConfig> {
        let grips = config.grip_sizes.clone();
        let grip_bounds = (grips[0], *grips.last().unwrap());
        let mut lower = vec![grip_bounds.0];
        let mut upper = vec![grip_bounds.1];
        let mut dims = vec![Dimension::Discrete { levels: grips }];
        match self {
            Variant::Baseline => {
                lower.push(0.0);
                upper.push(1.0);
                dims.push(Dimension::Continuous { tiles });
            }
            Variant::Siv => {
                lower.push(-1.0);
                upper.push(1.0);
                dims.push(Dimension::Discrete { levels: vec![-1.0, 1.0] });
            }
            Variant::NoSiv => {}
        }
        lower.push(0.0);
        upper.push(1.0);
        dims.push(Dimension::Discrete { levels: vec![FeatureVector::BIAS] });
        TilingConfig::new(FeatureBounds::new(lower, upper)?, dims, tilings)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Variant {
    type Err = SivError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "siv" => Ok(Variant::Siv),
            "no_siv" | "no-siv" => Ok(Variant::NoSiv),
            other => Err(SivError::Config(format!("unknown variant {other:?}"))),
        }
    }
}

/// The state vector the given variant perceives. `hand_state` is only read
/// by the SIV variant.
pub fn observe(state: &EnvState, variant: Variant, hand_state: f64, config: &EnvConfig) -> FeatureVector {
    let grip = config.grip_sizes[state.grip];
    let values = match variant {
        Variant::Baseline => vec![grip, state.object_size, FeatureVector::BIAS],
        Variant::Siv => vec![grip, hand_state, FeatureVector::BIAS],
        Variant::NoSiv => vec![grip, FeatureVector::BIAS],
    };
    FeatureVector::new(values).expect("observations are finite with a bias entry")
}

/// One line of the newline-delimited episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub episode: usize,
    pub tick: u64,
    pub step: usize,
    /// Arm position the action was taken from.
    pub p: usize,
    pub grip: usize,
    pub object: f64,
    pub action: usize,
    pub reward: f64,
    pub events: Vec<EnvEvent>,
    pub phi: Vec<f64>,
}
