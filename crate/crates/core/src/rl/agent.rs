use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::mask::ActionMask;
use super::sarsa::{q_values, reset_traces, sarsa_update, EligibilityTraces, Transition, WeightVector};
use super::selection::{select_action, AgentConfig};
use super::tiling::{FeatureVector, TilingConfig};
use crate::error::{Result, SivError};

/// A SARSA(λ) learner owning its weights, traces and random stream.
#[derive(Debug, Clone)]
pub struct SarsaAgent {
    config: AgentConfig,
    coder: TilingConfig,
    weights: WeightVector,
    traces: EligibilityTraces,
    rng: ChaCha8Rng,
    updates: u64,
}

impl SarsaAgent {
    pub fn new(config: AgentConfig, coder: TilingConfig, n_actions: usize) -> Result<Self> {
        config.validate()?;
        if n_actions == 0 || n_actions > ActionMask::MAX_ACTIONS {
            return Err(SivError::Config(format!("unsupported action count {n_actions}")));
        }
        let mut weights = WeightVector::zeros(coder.size(), n_actions);
        weights.fill(config.initial_value / coder.tilings() as f64);
        Ok(SarsaAgent {
            weights,
            traces: EligibilityTraces::zeros(coder.size(), n_actions, config.trace_mode),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            coder,
            updates: 0,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn coder(&self) -> &TilingConfig {
        &self.coder
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn traces(&self) -> &EligibilityTraces {
        &self.traces
    }

    pub fn n_actions(&self) -> usize {
        self.weights.n_actions()
    }

    /// Number of SARSA updates applied since construction.
    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Restarts the exploration stream.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn begin_episode(&mut self) {
        reset_traces(&mut self.traces);
    }

    pub fn q_values(&self, features: &FeatureVector) -> Result<Vec<f64>> {
        let active = self.coder.tile_code(features.as_slice())?;
        Ok(q_values(&self.weights, &active))
    }

    pub fn select(&mut self, features: &FeatureVector, mask: &ActionMask) -> Result<usize> {
        let q = self.q_values(features)?;
        select_action(&q, mask, &self.config, &mut self.rng)
    }

    /// Like [`select`](Self::select) with exploration switched off.
    pub fn select_greedy(&mut self, features: &FeatureVector, mask: &ActionMask) -> Result<usize> {
        let q = self.q_values(features)?;
        let greedy = AgentConfig { epsilon: 0.0, strategy: super::SelectionStrategy::EpsilonGreedy, ..self.config.clone() };
        select_action(&q, mask, &greedy, &mut self.rng)
    }

    pub fn update(&mut self, transition: &Transition) -> Result<f64> {
        let delta = sarsa_update(&mut self.weights, &mut self.traces, transition, &self.config, &self.coder)?;
        self.updates += 1;
        Ok(delta)
    }

    /// SHA-256 over the little-endian bit patterns of every weight.
    pub fn weight_digest(&self) -> String {
        weight_digest(&self.weights)
    }

    pub fn snapshot(&self) -> WeightSnapshot {
        WeightSnapshot {
            version: WeightSnapshot::VERSION,
            config: self.config.clone(),
            coder: self.coder.clone(),
            n_actions: self.n_actions(),
            weights: self.weights.as_slice().to_vec(),
            steps: self.updates,
        }
    }

    pub fn from_snapshot(snapshot: WeightSnapshot) -> Result<Self> {
        if snapshot.version != WeightSnapshot::VERSION {
            return Err(SivError::Config(format!("unsupported snapshot version {}", snapshot.version)));
        }
        if snapshot.weights.len() != snapshot.coder.size() * snapshot.n_actions {
            return Err(SivError::Config("snapshot weight count does not match its coder".into()));
        }
        let mut agent = SarsaAgent::new(snapshot.config, snapshot.coder, snapshot.n_actions)?;
        agent.weights = WeightVector::from_values(snapshot.n_actions, snapshot.weights)?;
        agent.updates = snapshot.steps;
        Ok(agent)
    }
}

pub fn weight_digest(weights: &WeightVector) -> String {
    let mut hasher = Sha256::new();
    for w in weights.as_slice() {
        hasher.update(w.to_bits().to_le_bytes());
    }
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Serialized learner state. `version` is written first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSnapshot {
    pub version: u32,
    pub config: AgentConfig,
    pub coder: TilingConfig,
    pub n_actions: usize,
    pub weights: Vec<f64>,
    pub steps: u64,
}

impl WeightSnapshot {
    pub const VERSION: u32 = 1;

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
