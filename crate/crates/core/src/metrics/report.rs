//! Aggregated per-seed metric results.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One metric evaluated across seeds, with its aggregate statistics and the
/// hash of the evaluation configuration that produced it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: String,
    pub per_seed: Vec<(u64, f64)>,
    pub mean: f64,
    /// Population standard deviation across seeds.
    pub std: f64,
    pub config_hash: String,
}

impl MetricReport {
    pub fn new(metric: &str, per_seed: Vec<(u64, f64)>, config_hash: &str) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(Error::InvalidInput("a report needs at least one seed value".into()));
        }
        if per_seed.iter().any(|&(_, v)| !v.is_finite()) {
            return Err(Error::InvalidInput("metric values must be finite".into()));
        }
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().map(|&(_, v)| v).sum::<f64>() / n;
        let std = (per_seed.iter().map(|&(_, v)| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        Ok(MetricReport {
            metric: metric.to_string(),
            per_seed,
            mean,
            std,
            config_hash: config_hash.to_string(),
        })
    }

    /// Check the stored aggregates against a recomputation.
    pub fn validate(&self) -> Result<()> {
        let fresh = MetricReport::new(&self.metric, self.per_seed.clone(), &self.config_hash)?;
        if (fresh.mean - self.mean).abs() > 1e-10 || (fresh.std - self.std).abs() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "report aggregates are inconsistent: stored {}±{}, recomputed {}±{}",
                self.mean, self.std, fresh.mean, fresh.std
            )));
        }
        Ok(())
    }

    /// `metric,seed,value` rows followed by one JSON summary line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        use std::io::Write;
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "metric,seed,value")?;
        for (seed, value) in &self.per_seed {
            writeln!(f, "{},{seed},{value}", self.metric)?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        serde_json::to_string(self)
            .map_err(|e| Error::InvalidState(format!("report serialization failed: {e}")))
    }

    pub fn read_csv(path: &Path, config_hash: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        match lines.next() {
            Some("metric,seed,value") => {}
            other => {
                return Err(Error::format(
                    "report header",
                    format!("expected `metric,seed,value`, got {other:?}"),
                ))
            }
        }
        let mut metric: Option<String> = None;
        let mut per_seed = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, ',');
            let (name, seed, value) = (
                parts.next().unwrap_or_default(),
                parts.next().unwrap_or_default(),
                parts.next().unwrap_or_default(),
            );
            let seed: u64 = seed
                .parse()
                .map_err(|_| Error::format("report row", format!("row {i}: bad seed `{seed}`")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| Error::format("report row", format!("row {i}: bad value `{value}`")))?;
            match &metric {
                None => metric = Some(name.to_string()),
                Some(m) if m == name => {}
                Some(m) => {
                    return Err(Error::format(
                        "report row",
                        format!("row {i}: metric `{name}` mixed into a `{m}` report"),
                    ))
                }
            }
            per_seed.push((seed, value));
        }
        let metric = metric.ok_or_else(|| Error::format("report body", "no rows".to_string()))?;
        MetricReport::new(&metric, per_seed, config_hash)
    }
}
