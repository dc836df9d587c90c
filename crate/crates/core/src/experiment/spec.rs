use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::driver::CoderSpec;
use crate::env::{EnvConfig, Variant};
use crate::error::{Result, SivError};
use crate::rl::AgentConfig;
use crate::user::{PreferenceTable, UserModelConfig};

/// Everything needed to reproduce one comparison of agent variants.
///
/// Grip count and object sizes live in `env`. When `preferences` is absent
/// the smallest object prefers the smallest grip and the largest object the
/// largest grip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub variants: Vec<Variant>,
    pub runs: usize,
    pub episodes: usize,
    pub env: EnvConfig,
    pub agent: AgentConfig,
    pub user: UserModelConfig,
    pub preferences: Option<PreferenceTable>,
    pub coding: CoderSpec,
    pub master_seed: u64,
    pub blind_shuffle: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        ExperimentSpec {
            variants: Variant::ALL.to_vec(),
            runs: 3,
            episodes: 15,
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
            user: UserModelConfig::default(),
            preferences: None,
            coding: CoderSpec::default(),
            master_seed: 0,
            blind_shuffle: true,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SivError::Config(format!("spec: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SivError::Config(format!("cannot read spec {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn preference_table(&self) -> PreferenceTable {
        self.preferences
            .clone()
            .unwrap_or_else(|| PreferenceTable::by_size(&self.env))
    }

    /// Every invalid field, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.variants.is_empty() {
            out.push("no agent variants selected".into());
        }
        let mut seen = self.variants.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.variants.len() {
            out.push("agent variants listed more than once".into());
        }
        if self.runs < 1 {
            out.push("runs must be at least 1".into());
        }
        if self.episodes < 1 {
            out.push("episodes must be at least 1".into());
        }
        if self.coding.tilings < 1 || self.coding.tiles < 1 {
            out.push("tilings and tiles must be at least 1".into());
        }
        out.extend(self.env.violations().into_iter().map(|v| format!("env: {v}")));
        out.extend(self.agent.violations().into_iter().map(|v| format!("agent: {v}")));
        out.extend(self.user.violations().into_iter().map(|v| format!("user: {v}")));
        if self.env.violations().is_empty() {
            out.extend(self.preference_table().violations(&self.env).into_iter().map(|v| format!("preferences: {v}")));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(SivError::InvalidSpec(v))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_mirror_the_published_protocol() {
        let spec = ExperimentSpec::default();
        assert_eq!(spec.runs, 3);
        assert_eq!(spec.episodes, 15);
        assert_eq!(spec.env.n_grips(), 4);
        assert_eq!(spec.env.object_sizes.len(), 2);
        assert_eq!((spec.agent.lambda, spec.agent.alpha, spec.agent.gamma, spec.agent.epsilon), (0.0, 0.5, 1.0, 0.1));
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let spec = ExperimentSpec::from_json(r#"{"runs": 2, "variants": ["siv", "no_siv"], "env": {"travel_steps": 3}}"#).unwrap();
        assert_eq!(spec.runs, 2);
        assert_eq!(spec.variants, vec![Variant::Siv, Variant::NoSiv]);
        assert_eq!(spec.env.travel_steps, 3);
        assert_eq!(spec.env.n_grips(), 4);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentSpec::from_json(r#"{"runz": 2}"#).is_err());
    }

    #[test]
    fn lists_every_violation() {
        let mut spec = ExperimentSpec { runs: 0, episodes: 0, ..ExperimentSpec::default() };
        spec.agent.alpha = -1.0;
        spec.user.push_probability = 2.0;
        match spec.validate() {
            Err(SivError::InvalidSpec(v)) => assert_eq!(v.len(), 4, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }
}
