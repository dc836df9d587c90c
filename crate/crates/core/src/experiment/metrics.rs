use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::env::Variant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub variant: Variant,
    pub run: usize,
    pub episode: usize,
    pub steps: usize,
    pub pushes: usize,
    pub total_reward: f64,
    pub truncated: bool,
    pub seed: u64,
}

/// Per-run averages (panels a and b).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub variant: Variant,
    pub run: usize,
    pub episodes: usize,
    pub avg_steps: f64,
    pub avg_pushes: f64,
}

/// Per-variant totals (panels c, d and e).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantTotals {
    pub variant: Variant,
    pub total_steps: usize,
    pub total_reward: f64,
    pub total_pushes: usize,
    pub truncated: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub runs: Vec<RunSummary>,
    pub variants: Vec<VariantTotals>,
}

impl RunMetrics {
    pub fn from_records(records: &[EpisodeRecord]) -> Self {
        let mut per_run: BTreeMap<(Variant, usize), (usize, usize, usize)> = BTreeMap::new();
        let mut per_variant: BTreeMap<Variant, VariantTotals> = BTreeMap::new();
        for r in records {
            let e = per_run.entry((r.variant, r.run)).or_default();
            e.0 += 1;
            e.1 += r.steps;
            e.2 += r.pushes;
            let t = per_variant.entry(r.variant).or_insert(VariantTotals {
                variant: r.variant,
                total_steps: 0,
                total_reward: 0.0,
                total_pushes: 0,
                truncated: 0,
            });
            t.total_steps += r.steps;
            t.total_reward += r.total_reward;
            t.total_pushes += r.pushes;
            t.truncated += r.truncated as usize;
        }
        RunMetrics {
            runs: per_run
                .into_iter()
                .map(|((variant, run), (n, steps, pushes))| RunSummary {
                    variant,
                    run,
                    episodes: n,
                    avg_steps: steps as f64 / n as f64,
                    avg_pushes: pushes as f64 / n as f64,
                })
                .collect(),
            variants: per_variant.into_values().collect(),
        }
    }

    pub fn totals(&self, variant: Variant) -> Option<&VariantTotals> {
        self.variants.iter().find(|t| t.variant == variant)
    }
}

/// Mean steps of `variant` over episodes in `range`, pooled across runs.
pub fn mean_steps(records: &[EpisodeRecord], variant: Variant, range: std::ops::Range<usize>) -> f64 {
    let picked: Vec<usize> = records
        .iter()
        .filter(|r| r.variant == variant && range.contains(&r.episode))
        .map(|r| r.steps)
        .collect();
    picked.iter().sum::<usize>() as f64 / picked.len().max(1) as f64
}
