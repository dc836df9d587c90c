//! Tick-by-tick coupling of one learner with one environment.
//!
//! Each tick the current scene is observed, an action is chosen from the
//! current mask, the previous transition is learned from (now that its
//! successor action is known), and the environment advances. Headless
//! experiments, live sessions and log replays all drive a [`Trial`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{self, EnvConfig, EnvEvent, EnvState, PushEvent, StepRecord, Variant};
use crate::error::{Result, SivError};
use crate::feedback::HandState;
use crate::rl::{AgentConfig, FeatureVector, SarsaAgent, Transition};
use crate::seed::derive_seed;
use crate::user::PreferenceTable;

/// Tile-coder resolution shared by all variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoderSpec {
    pub tilings: usize,
    /// Tiles per continuous dimension.
    pub tiles: usize,
}

impl Default for CoderSpec {
    fn default() -> Self {
        CoderSpec { tilings: 8, tiles: 8 }
    }
}

/// How an episode finished.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEnd {
    pub episode: usize,
    pub steps: usize,
    pub pushes: usize,
    pub reward: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickReport {
    pub record: StepRecord,
    pub state: EnvState,
    pub end: Option<EpisodeEnd>,
}

#[derive(Debug, Clone)]
struct Pending {
    features: FeatureVector,
    action: usize,
    reward: f64,
}

#[derive(Debug, Clone)]
pub struct Trial {
    variant: Variant,
    env: EnvConfig,
    prefs: PreferenceTable,
    agent: SarsaAgent,
    state: EnvState,
    pending: Option<Pending>,
    episode: usize,
    pushes: usize,
    reward: f64,
    active: bool,
    learning: bool,
}

impl Trial {
    pub fn new(
        variant: Variant,
        env: EnvConfig,
        prefs: PreferenceTable,
        agent_config: AgentConfig,
        coding: CoderSpec,
    ) -> Result<Self> {
        env.validate()?;
        let violations = prefs.violations(&env);
        if !violations.is_empty() {
            return Err(SivError::Config(violations.join("; ")));
        }
        let coder = variant.coder(&env, coding.tilings, coding.tiles)?;
        let agent = SarsaAgent::new(agent_config, coder, env.n_actions())?;
        let state = EnvState { position: 0, grip: 0, object_size: env.object_sizes[0], retreat: false, steps: 0, terminal: true };
        Ok(Trial {
            variant,
            env,
            prefs,
            agent,
            state,
            pending: None,
            episode: 0,
            pushes: 0,
            reward: 0.0,
            active: false,
            learning: true,
        })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn env(&self) -> &EnvConfig {
        &self.env
    }

    pub fn prefs(&self) -> &PreferenceTable {
        &self.prefs
    }

    pub fn agent(&self) -> &SarsaAgent {
        &self.agent
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// True while an episode is in progress.
    pub fn is_active(&self) -> bool {
        self.active
    }

    /// With learning off the agent acts greedily and its weights are frozen.
    pub fn set_learning(&mut self, learning: bool) {
        self.learning = learning;
    }

    /// Resets the environment for episode `episode` using `seed` for the
    /// initial scene and the agent's exploration.
    pub fn start_episode(&mut self, episode: usize, seed: u64) {
        let mut env_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["env"]));
        self.state = env::reset(&self.env, &mut env_rng);
        self.agent.reseed(derive_seed(seed, &["agent"]));
        self.agent.begin_episode();
        self.pending = None;
        self.episode = episode;
        self.pushes = 0;
        self.reward = 0.0;
        self.active = true;
    }

    /// One decision and one environment step.
    pub fn tick(&mut self, hand: HandState, push: Option<PushEvent>, tick: u64) -> Result<TickReport> {
        if !self.active {
            return Err(SivError::Contract("tick outside an episode".into()));
        }
        let features = env::observe(&self.state, self.variant, hand.value(), &self.env);
        let mask = env::available_actions(&self.state, &self.env)?;
        let action = if self.learning {
            self.agent.select(&features, &mask)?
        } else {
            self.agent.select_greedy(&features, &mask)?
        };
        if let Some(prev) = self.pending.take() {
            if self.learning {
                self.agent.update(&Transition {
                    features: prev.features,
                    action: prev.action,
                    reward: prev.reward,
                    next_features: features.clone(),
                    next_action: action,
                    terminal: false,
                })?;
            }
        }
        let outcome = env::step(&self.state, action, push, &self.env, &self.prefs)?;
        if outcome.events.contains(&EnvEvent::PushPenalized) {
            self.pushes += 1;
        }
        self.reward += outcome.reward;
        let record = StepRecord {
            episode: self.episode,
            tick,
            step: outcome.state.steps,
            p: self.state.position,
            grip: self.state.grip,
            object: self.state.object_size,
            action,
            reward: outcome.reward,
            events: outcome.events.clone(),
            phi: features.as_slice().to_vec(),
        };
        self.state = outcome.state;
        let mut end = None;
        if outcome.terminal {
            if self.learning {
                self.agent.update(&Transition::terminal(features, action, outcome.reward))?;
            }
            end = Some(self.finish(false));
        } else if self.state.steps >= self.env.episode_cap {
            end = Some(self.finish(true));
        } else {
            self.pending = Some(Pending { features, action, reward: outcome.reward });
        }
        Ok(TickReport { record, state: self.state.clone(), end })
    }

    fn finish(&mut self, truncated: bool) -> EpisodeEnd {
        self.active = false;
        self.pending = None;
        EpisodeEnd {
            episode: self.episode,
            steps: self.state.steps,
            pushes: self.pushes,
            reward: self.reward,
            truncated,
        }
    }
}
