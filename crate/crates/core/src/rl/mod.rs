//! SARSA(λ) over tile-coded linear function approximation.

mod agent;
mod mask;
mod sarsa;
mod selection;
mod tiling;

pub use agent::{weight_digest, SarsaAgent, WeightSnapshot};
pub use mask::ActionMask;
pub use sarsa::{
    q_value, q_values, reset_traces, sarsa_update, td_error, EligibilityTraces, Transition, WeightVector,
};
pub use selection::{select_action, softmax_probabilities, AgentConfig, SelectionStrategy, TraceMode};
pub use tiling::{ActiveTileSet, Dimension, FeatureBounds, FeatureVector, TilingConfig};
