//! Run-directory layout and the per-run manifest.
//!
//! Layout: `<root>/runs/<config-hash>/<seed>/{config.toml, checkpoints/,
//! curves.csv, metrics/, figures/, manifest.json}`. Evaluation reports that
//! aggregate across seeds live one level up at `<root>/runs/<config-hash>/
//! metrics/`. A run directory whose manifest says `complete` is never
//! mutated again: training skips it, and only `metrics/` and `figures/`
//! accept new (evaluation) artifacts.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Everything needed to regenerate or audit one seed's run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    /// `running`, `complete`, `paused`, or `failed: <step>`.
    pub status: String,
    /// Paths relative to the run directory; all must exist on completion.
    pub artifacts: Vec<String>,
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn start(config_hash: &str, seed: u64) -> Self {
        RunManifest {
            config_hash: config_hash.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now_unix(),
            finished_unix: None,
            status: "running".into(),
            artifacts: Vec::new(),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status == "complete"
    }

    /// Mark complete after verifying every artifact path exists.
    pub fn complete(&mut self, run_dir: &Path, artifacts: Vec<String>) -> Result<()> {
        for a in &artifacts {
            let p = run_dir.join(a);
            if !p.exists() {
                bail!("manifest lists missing artifact {}", p.display());
            }
        }
        self.artifacts = artifacts;
        self.finished_unix = Some(now_unix());
        self.status = "complete".into();
        self.save(run_dir)
    }

    /// Mark a run stopped early (e.g. by `--max-steps`) so a later
    /// `--resume` picks it back up.
    pub fn pause(&mut self, run_dir: &Path, artifacts: Vec<String>) -> Result<()> {
        self.artifacts = artifacts;
        self.finished_unix = Some(now_unix());
        self.status = "paused".into();
        self.save(run_dir)
    }

    pub fn fail(&mut self, run_dir: &Path, step: &str) -> Result<()> {
        self.finished_unix = Some(now_unix());
        self.status = format!("failed: {step}");
        self.save(run_dir)
    }

    pub fn save(&self, run_dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(run_dir.join("manifest.json"), json)
            .with_context(|| format!("writing manifest in {}", run_dir.display()))?;
        Ok(())
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(run_dir.join("manifest.json"))
            .with_context(|| format!("reading manifest in {}", run_dir.display()))?;
        Ok(serde_json::from_str(&raw)?)
    }
}

/// Paths of one seed's run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn new(out_root: &Path, config_hash: &str, seed: u64) -> Self {
        RunDir {
            root: out_root.join("runs").join(config_hash).join(seed.to_string()),
        }
    }

    pub fn create(&self) -> Result<()> {
        for sub in ["checkpoints", "metrics", "figures"] {
            std::fs::create_dir_all(self.root.join(sub))?;
        }
        Ok(())
    }

    pub fn config_file(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn curves_file(&self) -> PathBuf {
        self.root.join("curves.csv")
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn figures(&self) -> PathBuf {
        self.root.join("figures")
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        RunManifest::load(&self.root)
    }

    pub fn has_manifest(&self) -> bool {
        self.root.join("manifest.json").exists()
    }
}

/// The per-config directory holding seed runs and cross-seed metrics.
pub fn config_dir(out_root: &Path, config_hash: &str) -> PathBuf {
    out_root.join("runs").join(config_hash)
}
