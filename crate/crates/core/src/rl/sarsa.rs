//! Linear action values over tile features and the SARSA(λ) update.

use serde::{Deserialize, Serialize};

use super::selection::{AgentConfig, TraceMode};
use super::tiling::{ActiveTileSet, FeatureVector, TilingConfig};
use crate::error::{Result, SivError};

/// Action-value weights, one per (tile, action) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    n_actions: usize,
    values: Vec<f64>,
}

impl WeightVector {
    pub fn zeros(tiles: usize, n_actions: usize) -> Self {
        WeightVector {
            n_actions,
            values: vec![0.0; tiles * n_actions],
        }
    }

    pub fn from_values(n_actions: usize, values: Vec<f64>) -> Result<Self> {
        if n_actions == 0 || !values.len().is_multiple_of(n_actions) {
            return Err(SivError::Config(format!(
                "{} weights do not divide into {n_actions} actions",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(SivError::Numeric("weights must be finite".into()));
        }
        Ok(WeightVector { n_actions, values })
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn tiles(&self) -> usize {
        self.values.len() / self.n_actions
    }

    pub fn get(&self, tile: usize, action: usize) -> f64 {
        self.values[tile * self.n_actions + action]
    }

    pub fn set(&mut self, tile: usize, action: usize, value: f64) {
        self.values[tile * self.n_actions + action] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn fill(&mut self, value: f64) {
        self.values.fill(value);
    }
}

/// Eligibility traces sharing the index space of [`WeightVector`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityTraces {
    mode: TraceMode,
    n_actions: usize,
    values: Vec<f64>,
}

impl EligibilityTraces {
    pub fn zeros(tiles: usize, n_actions: usize, mode: TraceMode) -> Self {
        EligibilityTraces {
            mode,
            n_actions,
            values: vec![0.0; tiles * n_actions],
        }
    }

    pub fn mode(&self) -> TraceMode {
        self.mode
    }

    pub fn get(&self, tile: usize, action: usize) -> f64 {
        self.values[tile * self.n_actions + action]
    }

    pub fn set(&mut self, tile: usize, action: usize, value: f64) {
        self.values[tile * self.n_actions + action] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// (tile, action) pairs with a nonzero trace.
    pub fn support(&self) -> Vec<(usize, usize)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, _)| (i / self.n_actions, i % self.n_actions))
            .collect()
    }

    fn decay(&mut self, factor: f64) {
        if factor == 0.0 {
            self.values.fill(0.0);
        } else {
            self.values.iter_mut().for_each(|e| *e *= factor);
        }
    }

    fn mark(&mut self, active: &ActiveTileSet, action: usize) {
        for &tile in active.indices() {
            let e = &mut self.values[tile * self.n_actions + action];
            match self.mode {
                TraceMode::Replacing => *e = 1.0,
                TraceMode::Accumulating => *e += 1.0,
            }
        }
    }
}

/// Zeroes every trace; called at the start of each episode.
pub fn reset_traces(traces: &mut EligibilityTraces) {
    traces.values.fill(0.0);
}

/// One step of experience: (S_t, A_t, R_{t+1}, S_{t+1}, A_{t+1}).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub features: FeatureVector,
    pub action: usize,
    pub reward: f64,
    pub next_features: FeatureVector,
    pub next_action: usize,
    pub terminal: bool,
}

impl Transition {
    /// A transition into a terminal state; the successor fields are unused.
    pub fn terminal(features: FeatureVector, action: usize, reward: f64) -> Self {
        Transition {
            next_features: features.clone(),
            features,
            action,
            reward,
            next_action: action,
            terminal: true,
        }
    }
}

/// Sum of the weights of the active tiles for `action`.
pub fn q_value(weights: &WeightVector, active: &ActiveTileSet, action: usize) -> f64 {
    active.indices().iter().map(|&tile| weights.get(tile, action)).sum()
}

/// Action values for every action in the complete action space.
pub fn q_values(weights: &WeightVector, active: &ActiveTileSet) -> Vec<f64> {
    (0..weights.n_actions()).map(|a| q_value(weights, active, a)).collect()
}

/// TD error of `t` under the current weights. The value of a terminal
/// successor is zero.
pub fn td_error(t: &Transition, weights: &WeightVector, config: &AgentConfig, coder: &TilingConfig) -> Result<f64> {
    let active = coder.tile_code(t.features.as_slice())?;
    let current = q_value(weights, &active, t.action);
    let target = if t.terminal {
        t.reward
    } else {
        let next = coder.tile_code(t.next_features.as_slice())?;
        t.reward + config.gamma * q_value(weights, &next, t.next_action)
    };
    Ok(target - current)
}

/// Applies one SARSA(λ) update in place and returns the TD error.
///
/// Traces decay by γλ, the active (tile, A_t) entries are then marked, and
/// every weight moves by `alpha / tilings * δ * trace`. A non-finite TD error
/// leaves weights and traces untouched.
pub fn sarsa_update(
    weights: &mut WeightVector,
    traces: &mut EligibilityTraces,
    t: &Transition,
    config: &AgentConfig,
    coder: &TilingConfig,
) -> Result<f64> {
    let delta = td_error(t, weights, config, coder)?;
    if !delta.is_finite() {
        return Err(SivError::Numeric(format!("TD error is {delta}")));
    }
    let active = coder.tile_code(t.features.as_slice())?;
    traces.decay(config.gamma * config.lambda);
    traces.mark(&active, t.action);
    let step = config.alpha / coder.tilings() as f64 * delta;
    if step != 0.0 {
        for (w, e) in weights.values.iter_mut().zip(&traces.values) {
            if *e != 0.0 {
                *w += step * e;
            }
        }
    }
    if weights.values.iter().any(|w| !w.is_finite()) {
        return Err(SivError::Numeric("weights diverged".into()));
    }
    Ok(delta)
}
