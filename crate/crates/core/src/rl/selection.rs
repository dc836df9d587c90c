//! Action-selection strategies over a masked action space.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mask::ActionMask;
use crate::error::{Result, SivError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    EpsilonGreedy,
    EpsilonSoft,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMode {
    Replacing,
    Accumulating,
}

/// Learner hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    /// Step size, split evenly across tilings.
    pub alpha: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub strategy: SelectionStrategy,
    /// Only read by softmax selection.
    pub temperature: f64,
    pub trace_mode: TraceMode,
    /// Action value every state starts with, spread evenly over the tilings.
    /// Pessimistic by default: with no step cost an all-zero start makes
    /// detours free and the greedy policy never settles.
    pub initial_value: f64,
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            alpha: 0.5,
            gamma: 1.0,
            lambda: 0.0,
            epsilon: 0.1,
            strategy: SelectionStrategy::EpsilonGreedy,
            temperature: 1.0,
            trace_mode: TraceMode::Replacing,
            initial_value: -1.0,
            seed: 0,
        }
    }
}

impl AgentConfig {
    /// Collects every out-of-range field.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            out.push(format!("alpha must be > 0, got {}", self.alpha));
        }
        for (name, v) in [("gamma", self.gamma), ("lambda", self.lambda), ("epsilon", self.epsilon)] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !self.initial_value.is_finite() {
            out.push(format!("initial value must be finite, got {}", self.initial_value));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            out.push(format!("temperature must be > 0, got {}", self.temperature));
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
}

/// Picks an action among those in `available` according to the configured
/// strategy. `q_values` is indexed by action over the complete action space.
pub fn select_action<R: Rng + ?Sized>(
    q_values: &[f64],
    available: &ActionMask,
    config: &AgentConfig,
    rng: &mut R,
) -> Result<usize> {
    if available.is_empty() {
        return Err(SivError::Contract("no available actions to select from".into()));
    }
    if q_values.len() != available.len() {
        return Err(SivError::Contract(format!(
            "{} action values for an action space of {}",
            q_values.len(),
            available.len()
        )));
    }
    let actions: Vec<usize> = available.iter().collect();
    let chosen = match config.strategy {
        SelectionStrategy::EpsilonGreedy => {
            if rng.gen::<f64>() < config.epsilon {
                actions[rng.gen_range(0..actions.len())]
            } else {
                greedy(q_values, &actions, rng)
            }
        }
        SelectionStrategy::EpsilonSoft => {
            let best = greedy(q_values, &actions, rng);
            if actions.len() > 1 && rng.gen::<f64>() < config.epsilon {
                let rest: Vec<usize> = actions.iter().copied().filter(|&a| a != best).collect();
                rest[rng.gen_range(0..rest.len())]
            } else {
                best
            }
        }
        SelectionStrategy::Softmax => {
            let probs = softmax_probabilities(q_values, &actions, config.temperature);
            let u = rng.gen::<f64>();
            let mut acc = 0.0;
            let mut pick = *actions.last().unwrap();
            for (&a, p) in actions.iter().zip(&probs) {
                acc += p;
                if u < acc {
                    pick = a;
                    break;
                }
            }
            pick
        }
    };
    Ok(chosen)
}

/// Argmax over `actions`, breaking ties uniformly at random.
fn greedy<R: Rng + ?Sized>(q_values: &[f64], actions: &[usize], rng: &mut R) -> usize {
    let best = actions
        .iter()
        .map(|&a| q_values[a])
        .fold(f64::NEG_INFINITY, f64::max);
    let ties: Vec<usize> = actions.iter().copied().filter(|&a| q_values[a] == best).collect();
    match ties.len() {
        0 => actions[0],
        1 => ties[0],
        n => ties[rng.gen_range(0..n)],
    }
}

/// Boltzmann probabilities over `actions`, in the same order.
pub fn softmax_probabilities(q_values: &[f64], actions: &[usize], temperature: f64) -> Vec<f64> {
    let max = actions
        .iter()
        .map(|&a| q_values[a])
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = actions
        .iter()
        .map(|&a| ((q_values[a] - max) / temperature).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
