use std::fs;
use std::path::Path;

use super::metrics::{EpisodeRecord, RunMetrics};
use crate::error::Result;

const RECORD_HEADER: [&str; 8] = ["variant", "run", "episode", "steps", "pushes", "total_reward", "truncated", "seed"];

/// Plot-data files, one per results panel.
pub const PANEL_FILES: [&str; 5] = [
    "panel_a_avg_steps_per_run.csv",
    "panel_b_avg_pushes_per_run.csv",
    "panel_c_total_steps.csv",
    "panel_d_total_reward.csv",
    "panel_e_total_pushes.csv",
];

/// Writes `records.csv`, `metrics.json` and the panel CSVs into `dir`.
pub fn export(records: &[EpisodeRecord], metrics: &RunMetrics, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
    w.write_record(RECORD_HEADER)?;
    for r in records {
        w.write_record([
            r.variant.label().to_string(),
            r.run.to_string(),
            r.episode.to_string(),
            r.steps.to_string(),
            r.pushes.to_string(),
            r.total_reward.to_string(),
            r.truncated.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    let mut json = serde_json::to_string_pretty(metrics)?;
    json.push('\n');
    fs::write(dir.join("metrics.json"), json)?;
    write_panels(metrics, dir)
}

pub fn write_panels(metrics: &RunMetrics, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let per_run = |file: &str, col: &str, value: fn(&super::RunSummary) -> f64| -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(file))?;
        w.write_record(["variant", "run", col])?;
        for s in &metrics.runs {
            w.write_record([s.variant.label().to_string(), s.run.to_string(), value(s).to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    per_run(PANEL_FILES[0], "avg_steps", |s| s.avg_steps)?;
    per_run(PANEL_FILES[1], "avg_pushes", |s| s.avg_pushes)?;
    let per_variant = |file: &str, col: &str, value: fn(&super::VariantTotals) -> String| -> Result<()> {
        let mut w = csv::Writer::from_path(dir.join(file))?;
        w.write_record(["variant", col])?;
        for t in &metrics.variants {
            w.write_record([t.variant.label().to_string(), value(t)])?;
        }
        w.flush()?;
        Ok(())
    };
    per_variant(PANEL_FILES[2], "total_steps", |t| t.total_steps.to_string())?;
    per_variant(PANEL_FILES[3], "total_reward", |t| t.total_reward.to_string())?;
    per_variant(PANEL_FILES[4], "total_pushes", |t| t.total_pushes.to_string())?;
    Ok(())
}

/// Reads a `records.csv` written by [`export`].
pub fn read_records(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
