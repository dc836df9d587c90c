//! Scripted stand-in for the human trainer.
//!
//! The user knows the preferred grip for every object. Each tick it shows a
//! thumbs up when the grip it saw `reaction_delay` ticks ago was the
//! preferred one (and thumbs down otherwise), occasionally flipping the
//! gesture by mistake. When the arm heads for the object with the wrong grip
//! it presses the penalty button.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{EnvConfig, EnvState, GraspRule, PushEvent};
use crate::error::{Result, SivError};
use crate::feedback::HandSample;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preference {
    pub object_size: f64,
    pub grip: usize,
}

/// Preferred grip for every object size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PreferenceTable(Vec<Preference>);

impl PreferenceTable {
    pub fn new(entries: Vec<Preference>) -> Self {
        PreferenceTable(entries)
    }

    /// Smallest objects take the smallest grip, largest the largest; sizes in
    /// between are spread evenly over the grips.
    pub fn by_size(config: &EnvConfig) -> Self {
        let mut sizes = config.object_sizes.clone();
        sizes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        sizes.dedup();
        let n = config.n_grips();
        let m = sizes.len();
        let entries = sizes
            .iter()
            .enumerate()
            .map(|(i, &object_size)| {
                let grip = if m == 1 { n - 1 } else { (i * (n - 1) + (m - 1) / 2) / (m - 1) };
                Preference { object_size, grip }
            })
            .collect();
        PreferenceTable(entries)
    }

    pub fn entries(&self) -> &[Preference] {
        &self.0
    }

    pub fn preferred(&self, object_size: f64) -> Option<usize> {
        self.0.iter().find(|p| p.object_size == object_size).map(|p| p.grip)
    }

    pub fn approves(&self, grip: usize, object_size: f64) -> bool {
        self.preferred(object_size) == Some(grip)
    }

    pub fn violations(&self, config: &EnvConfig) -> Vec<String> {
        let mut out = Vec::new();
        for &o in &config.object_sizes {
            if self.preferred(o).is_none() {
                out.push(format!("no preferred grip for object size {o}"));
            }
        }
        for p in &self.0 {
            if p.grip >= config.n_grips() {
                out.push(format!("preferred grip {} for object {} out of range", p.grip, p.object_size));
            }
        }
        out
    }
}

impl GraspRule for PreferenceTable {
    fn success(&self, grip: usize, object_size: f64) -> bool {
        self.approves(grip, object_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserModelConfig {
    /// Probability that a gesture is shown the wrong way round.
    pub gesture_error: f64,
    /// Ticks between a scene and the gesture reacting to it.
    pub reaction_delay: usize,
    /// Pushes only happen once the arm is beyond this position.
    pub push_threshold: usize,
    /// Chance of pushing on each eligible tick.
    pub push_probability: f64,
    pub seed: u64,
}

impl Default for UserModelConfig {
    fn default() -> Self {
        UserModelConfig {
            gesture_error: 0.05,
            reaction_delay: 2,
            push_threshold: 1,
            push_probability: 0.8,
            seed: 0,
        }
    }
}

impl UserModelConfig {
    pub fn noiseless() -> Self {
        UserModelConfig { gesture_error: 0.0, reaction_delay: 0, push_probability: 1.0, ..Self::default() }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..1.0).contains(&self.gesture_error) {
            out.push(format!("gesture error must lie in [0, 1), got {}", self.gesture_error));
        }
        if !(self.push_probability > 0.0 && self.push_probability <= 1.0) {
            out.push(format!("push probability must lie in (0, 1], got {}", self.push_probability));
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

/// Gesture reacting to `seen`: thumbs up for the preferred grip, thumbs down
/// otherwise, flipped with the configured error probability.
pub fn gesture_for<R: Rng + ?Sized>(
    seen: &EnvState,
    prefs: &PreferenceTable,
    config: &UserModelConfig,
    rng: &mut R,
    t_ms: u64,
) -> HandSample {
    let approve = prefs.approves(seen.grip, seen.object_size);
    let flip = rng.gen::<f64>() < config.gesture_error;
    if approve != flip {
        HandSample::thumbs_up(t_ms)
    } else {
        HandSample::thumbs_down(t_ms)
    }
}

/// Whether the user would press the penalty button on this scene, before
/// the push probability is applied.
pub fn push_eligible(state: &EnvState, prefs: &PreferenceTable, config: &UserModelConfig) -> bool {
    !state.terminal
        && !state.retreat
        && state.position > config.push_threshold
        && !prefs.approves(state.grip, state.object_size)
}

/// Presses the penalty button with the configured probability when the arm
/// is past the threshold carrying the wrong grip.
pub fn maybe_push<R: Rng + ?Sized>(
    state: &EnvState,
    prefs: &PreferenceTable,
    config: &UserModelConfig,
    rng: &mut R,
    t_ms: u64,
) -> Option<PushEvent> {
    if push_eligible(state, prefs, config) && rng.gen::<f64>() < config.push_probability {
        Some(PushEvent { t_ms })
    } else {
        None
    }
}

/// What the user produces on one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserFeedback {
    pub sample: HandSample,
    pub push: Option<PushEvent>,
}

/// Stateful synthetic user: remembers recent scenes to apply its reaction
/// delay and owns its random stream.
#[derive(Debug, Clone)]
pub struct SyntheticUser {
    config: UserModelConfig,
    prefs: PreferenceTable,
    rng: ChaCha8Rng,
    seen: VecDeque<EnvState>,
}

impl SyntheticUser {
    pub fn new(config: UserModelConfig, prefs: PreferenceTable) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        SyntheticUser { config, prefs, rng, seen: VecDeque::new() }
    }

    pub fn prefs(&self) -> &PreferenceTable {
        &self.prefs
    }

    pub fn config(&self) -> &UserModelConfig {
        &self.config
    }

    /// Forgets earlier scenes and restarts the random stream.
    pub fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.seen.clear();
    }

    /// Reacts to the scene `state` shown at `t_ms`.
    pub fn react(&mut self, state: &EnvState, t_ms: u64) -> UserFeedback {
        self.seen.push_back(state.clone());
        while self.seen.len() > self.config.reaction_delay + 1 {
            self.seen.pop_front();
        }
        let delayed = self.seen.front().expect("just pushed").clone();
        let sample = gesture_for(&delayed, &self.prefs, &self.config, &mut self.rng, t_ms);
        let push = maybe_push(state, &self.prefs, &self.config, &mut self.rng, t_ms);
        UserFeedback { sample, push }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feedback::{hand_state, HandState};

    fn prefs() -> PreferenceTable {
        PreferenceTable::by_size(&EnvConfig::default())
    }

    fn state(position: usize, grip: usize, object_size: f64) -> EnvState {
        EnvState { position, grip, object_size, retreat: false, steps: 0, terminal: false }
    }

    #[test]
    fn default_preferences_pair_extremes() {
        let p = prefs();
        assert_eq!(p.preferred(0.2), Some(0));
        assert_eq!(p.preferred(0.9), Some(3));
        assert!(p.violations(&EnvConfig::default()).is_empty());
    }

    #[test]
    fn noiseless_gestures() {
        let cfg = UserModelConfig::noiseless();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(gesture_for(&state(0, 3, 0.9), &prefs(), &cfg, &mut rng, 0).roll_deg, -90.0);
        assert_eq!(gesture_for(&state(0, 1, 0.9), &prefs(), &cfg, &mut rng, 0).roll_deg, 0.0);
    }

    #[test]
    fn gesture_error_rate() {
        let cfg = UserModelConfig { gesture_error: 0.1, ..UserModelConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = state(0, 3, 0.9);
        let flipped = (0..100_000)
            .filter(|_| hand_state(&gesture_for(&s, &prefs(), &cfg, &mut rng, 0)) == HandState::ThumbsDown)
            .count();
        assert!((flipped as f64 / 100_000.0 - 0.1).abs() < 0.005, "{flipped}");
    }

    #[test]
    fn never_pushes_on_correct_grip() {
        let cfg = UserModelConfig { push_probability: 1.0, ..UserModelConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for p in 0..=5 {
            assert!(maybe_push(&state(p, 0, 0.2), &prefs(), &cfg, &mut rng, 0).is_none());
        }
    }

    #[test]
    fn pushes_past_threshold_with_wrong_grip() {
        let cfg = UserModelConfig { push_probability: 1.0, ..UserModelConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(maybe_push(&state(cfg.push_threshold, 1, 0.2), &prefs(), &cfg, &mut rng, 0).is_none());
        assert!(maybe_push(&state(cfg.push_threshold + 1, 1, 0.2), &prefs(), &cfg, &mut rng, 0).is_some());
        let mut retreating = state(3, 1, 0.2);
        retreating.retreat = true;
        assert!(maybe_push(&retreating, &prefs(), &cfg, &mut rng, 0).is_none());
    }

    #[test]
    fn push_rate_on_eligible_ticks() {
        let cfg = UserModelConfig { push_probability: 0.5, ..UserModelConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = state(3, 1, 0.2);
        let pushes = (0..10_000).filter(|_| maybe_push(&s, &prefs(), &cfg, &mut rng, 0).is_some()).count();
        assert!((pushes as i64 - 5000).abs() <= 150, "{pushes}");
    }

    #[test]
    fn reaction_delay_lags_gestures() {
        let cfg = UserModelConfig { reaction_delay: 2, gesture_error: 0.0, ..UserModelConfig::default() };
        let mut user = SyntheticUser::new(cfg, prefs());
        user.begin_episode(0);
        let wrong = state(0, 1, 0.2);
        let right = state(0, 0, 0.2);
        let seq = [&wrong, &right, &right, &right];
        let states: Vec<HandState> = seq
            .iter()
            .enumerate()
            .map(|(i, s)| hand_state(&user.react(s, i as u64 * 100).sample))
            .collect();
        assert_eq!(states, vec![HandState::ThumbsDown, HandState::ThumbsDown, HandState::ThumbsDown, HandState::ThumbsUp]);
    }

    #[test]
    fn same_seed_same_stream() {
        let run = || {
            let mut user = SyntheticUser::new(UserModelConfig::default(), prefs());
            user.begin_episode(42);
            (0..200)
                .map(|i| {
                    let s = state(i % 6, i % 4, if i % 3 == 0 { 0.2 } else { 0.9 });
                    let f = user.react(&s, i as u64 * 100);
                    (f.sample.roll_deg.to_bits(), f.push.is_some())
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn validation() {
        let bad = UserModelConfig { gesture_error: 1.0, push_probability: 0.0, ..UserModelConfig::default() };
        assert_eq!(bad.violations().len(), 2);
        let table = PreferenceTable::new(vec![Preference { object_size: 0.2, grip: 9 }]);
        assert_eq!(table.violations(&EnvConfig::default()).len(), 2);
    }
}
