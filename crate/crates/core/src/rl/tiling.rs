//! Tile coding over a bounded feature space.
//!
//! Every tiling partitions the feature space into a grid. Continuous
//! dimensions are split into `tiles` equal-width cells and displaced by a
//! per-tiling offset (a fraction of one tile width), which adds one extra
//! cell at the upper edge. Discrete dimensions map a value to the nearest of
//! a fixed list of levels and are never displaced. A feature vector activates
//! exactly one tile per tiling; indices are laid out tiling-major, then
//! row-major over dimensions (the last dimension varies fastest).

use serde::{Deserialize, Serialize};

use crate::error::{Result, SivError};

/// Per-feature lower and upper bounds of the coded variable space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureBounds {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl FeatureBounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(SivError::Config("feature bounds need at least one feature".into()));
        }
        if lower.len() != upper.len() {
            return Err(SivError::Config(format!(
                "{} lower bounds but {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(SivError::Config(format!("feature {i}: bounds must be finite")));
            }
            if lo >= hi {
                return Err(SivError::Config(format!(
                    "feature {i}: lower bound {lo} must be below upper bound {hi}"
                )));
            }
        }
        Ok(FeatureBounds { lower, upper })
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn clamp(&self, index: usize, value: f64) -> f64 {
        value.clamp(self.lower[index], self.upper[index])
    }
}

/// How a single feature dimension is partitioned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    /// Equal-width tiles between the bounds, displaced per tiling.
    Continuous { tiles: usize },
    /// One tile per admissible value; inputs snap to the nearest level.
    Discrete { levels: Vec<f64> },
}

impl Dimension {
    pub fn tiles(&self) -> usize {
        match self {
            Dimension::Continuous { tiles } => *tiles,
            Dimension::Discrete { levels } => levels.len(),
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self, Dimension::Discrete { .. })
    }
}

/// The state features fed to the tile coder. The final entry is the bias
/// feature and is always 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub const BIAS: f64 = 1.0;

    pub fn new(values: Vec<f64>) -> Result<Self> {
        match values.last() {
            None => return Err(SivError::Config("empty feature vector".into())),
            Some(&b) if b != Self::BIAS => {
                return Err(SivError::Config(format!("bias feature must be 1.0, got {b}")))
            }
            _ => {}
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(SivError::Numeric(format!("non-finite feature value {v}")));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for FeatureVector {
    type Error = SivError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        FeatureVector::new(values)
    }
}

impl From<FeatureVector> for Vec<f64> {
    fn from(f: FeatureVector) -> Self {
        f.0
    }
}

/// One weight-table index per tiling.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActiveTileSet(Vec<usize>);

impl ActiveTileSet {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TilingConfig {
    tilings: usize,
    dimensions: Vec<Dimension>,
    /// `offsets[t][d]`, in fractions of one tile width.
    offsets: Vec<Vec<f64>>,
    size: usize,
    bounds: FeatureBounds,
}

impl TilingConfig {
    /// Builds a coder with offsets `t / tilings` on every continuous
    /// dimension of tiling `t`.
    pub fn new(bounds: FeatureBounds, dimensions: Vec<Dimension>, tilings: usize) -> Result<Self> {
        if tilings == 0 {
            return Err(SivError::Config("at least one tiling is required".into()));
        }
        let offsets = (0..tilings)
            .map(|t| {
                dimensions
                    .iter()
                    .map(|d| if d.is_discrete() { 0.0 } else { t as f64 / tilings as f64 })
                    .collect()
            })
            .collect();
        Self::with_offsets(bounds, dimensions, offsets)
    }

    pub fn with_offsets(
        bounds: FeatureBounds,
        dimensions: Vec<Dimension>,
        offsets: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let tilings = offsets.len();
        if tilings == 0 {
            return Err(SivError::Config("at least one tiling is required".into()));
        }
        if dimensions.len() != bounds.len() {
            return Err(SivError::Config(format!(
                "{} dimensions but {} bounded features",
                dimensions.len(),
                bounds.len()
            )));
        }
        for (d, dim) in dimensions.iter().enumerate() {
            match dim {
                Dimension::Continuous { tiles } if *tiles == 0 => {
                    return Err(SivError::Config(format!("dimension {d}: zero tiles")));
                }
                Dimension::Discrete { levels } => {
                    if levels.is_empty() {
                        return Err(SivError::Config(format!("dimension {d}: no levels")));
                    }
                    if levels.windows(2).any(|w| w[0] >= w[1]) || levels.iter().any(|l| !l.is_finite()) {
                        return Err(SivError::Config(format!(
                            "dimension {d}: levels must be finite and strictly increasing"
                        )));
                    }
                }
                _ => {}
            }
        }
        for (t, row) in offsets.iter().enumerate() {
            if row.len() != dimensions.len() {
                return Err(SivError::Config(format!(
                    "tiling {t}: {} offsets for {} dimensions",
                    row.len(),
                    dimensions.len()
                )));
            }
            for (d, off) in row.iter().enumerate() {
                if !(0.0..1.0).contains(off) {
                    return Err(SivError::Config(format!(
                        "tiling {t}, dimension {d}: offset {off} outside [0, 1)"
                    )));
                }
                if dimensions[d].is_discrete() && *off != 0.0 {
                    return Err(SivError::Config(format!(
                        "tiling {t}, dimension {d}: discrete dimensions take no offset"
                    )));
                }
            }
        }
        let per_tiling = dimensions
            .iter()
            .try_fold(1usize, |acc, d| acc.checked_mul(d.tiles() + 1))
            .ok_or_else(|| SivError::Config("weight table size overflows".into()))?;
        let size = per_tiling
            .checked_mul(tilings)
            .ok_or_else(|| SivError::Config("weight table size overflows".into()))?;
        Ok(TilingConfig {
            tilings,
            dimensions,
            offsets,
            size,
            bounds,
        })
    }

    pub fn tilings(&self) -> usize {
        self.tilings
    }

    /// Total number of tiles across all tilings.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn offsets(&self) -> &[Vec<f64>] {
        &self.offsets
    }

    pub fn bounds(&self) -> &FeatureBounds {
        &self.bounds
    }

    fn tiles_per_tiling(&self) -> usize {
        self.size / self.tilings
    }

    /// Returns the active tile of every tiling. Values outside the bounds are
    /// clamped first.
    pub fn tile_code(&self, features: &[f64]) -> Result<ActiveTileSet> {
        if features.len() != self.bounds.len() {
            return Err(SivError::Config(format!(
                "feature vector has {} entries, coder expects {}",
                features.len(),
                self.bounds.len()
            )));
        }
        if let Some(v) = features.iter().find(|v| !v.is_finite()) {
            return Err(SivError::Numeric(format!("cannot tile-code non-finite value {v}")));
        }
        let stride = self.tiles_per_tiling();
        let indices = (0..self.tilings)
            .map(|t| {
                let cell = self
                    .dimensions
                    .iter()
                    .enumerate()
                    .fold(0usize, |acc, (d, dim)| {
                        let c = self.cell(t, d, dim, features[d]);
                        acc * (dim.tiles() + 1) + c
                    });
                t * stride + cell
            })
            .collect();
        Ok(ActiveTileSet(indices))
    }

    fn cell(&self, tiling: usize, d: usize, dim: &Dimension, value: f64) -> usize {
        let x = self.bounds.clamp(d, value);
        match dim {
            Dimension::Continuous { tiles } => {
                let lo = self.bounds.lower[d];
                let hi = self.bounds.upper[d];
                let scaled = (x - lo) / (hi - lo) * *tiles as f64 + self.offsets[tiling][d];
                (scaled.floor().max(0.0) as usize).min(*tiles)
            }
            Dimension::Discrete { levels } => nearest_level(levels, x),
        }
    }
}

fn nearest_level(levels: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, level) in levels.iter().enumerate() {
        let dist = (level - x).abs();
        if dist < best_dist {
            best = i;
            best_dist = dist;
        }
    }
    best
}
