//! The experiment configuration schema: a single TOML document with
//! schema-checked defaults for every field, hashed for provenance.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use id_distill_core::data::{FactorSpace, VariantConfig, VariantKind};
use id_distill_core::nets::GanMode;
use id_distill_core::train::{GANStageConfig, StageTwoMode, VAEStageConfig, VaeObjective};

/// Where the images come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// `dsprites` (procedural, with factor annotations) or `folder`
    /// (ingested images, no annotations).
    pub source: String,
    /// Factor cardinalities `[shape, scale, orientation, pos_x, pos_y]`.
    pub cardinalities: [usize; 5],
    pub resolution: usize,
    /// `plain`, `color`, `noisy`, or `scream`.
    pub variant: String,
    pub noise_seed: u64,
    pub color_levels: u32,
    /// Image folder for `source = "folder"`.
    pub folder: Option<String>,
    /// Dataset file name, resolved under `<out root>/datasets/` unless
    /// absolute.
    pub file: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            source: "dsprites".into(),
            cardinalities: [3, 6, 10, 16, 16],
            resolution: 64,
            variant: "plain".into(),
            noise_seed: 0,
            color_levels: 8,
            folder: None,
            file: "dataset.idgn".into(),
        }
    }
}

impl DatasetConfig {
    pub fn factor_space(&self) -> Result<FactorSpace> {
        FactorSpace::dsprites_with(self.cardinalities)
            .map_err(|e| anyhow::anyhow!("dataset.cardinalities: {e}"))
    }

    pub fn variant_config(&self) -> Result<VariantConfig> {
        let kind = match self.variant.as_str() {
            "plain" => VariantKind::Plain,
            "color" => VariantKind::Color,
            "noisy" => VariantKind::Noisy,
            "scream" => VariantKind::ScreamLike,
            other => bail!("dataset.variant: unknown variant `{other}`"),
        };
        VariantConfig::new(kind, self.noise_seed, self.color_levels)
            .map_err(|e| anyhow::anyhow!("dataset.variant: {e}"))
    }

    /// Whether the dataset carries ground-truth factor annotations.
    pub fn has_factors(&self) -> bool {
        self.source == "dsprites"
    }

    pub fn resolve_file(&self, out_root: &Path) -> PathBuf {
        let p = Path::new(&self.file);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            out_root.join("datasets").join(p)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage1Config {
    pub enabled: bool,
    /// `vae`, `beta_vae`, or `factor_vae`.
    pub objective: String,
    pub beta: f64,
    pub gamma: f64,
    pub c_dim: usize,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub tc_lr: f64,
}

impl Default for Stage1Config {
    fn default() -> Self {
        Stage1Config {
            enabled: true,
            objective: "beta_vae".into(),
            beta: 4.0,
            gamma: 0.0,
            c_dim: 10,
            steps: 30_000,
            batch_size: 64,
            lr: 1e-4,
            tc_lr: 1e-4,
        }
    }
}

impl Stage1Config {
    pub fn to_core(&self, seed: u64) -> Result<VAEStageConfig> {
        let objective = match self.objective.as_str() {
            "vae" => VaeObjective::Vae,
            "beta_vae" => VaeObjective::BetaVae,
            "factor_vae" => VaeObjective::FactorVae,
            other => bail!("stage1.objective: unknown objective `{other}`"),
        };
        let cfg = VAEStageConfig {
            objective,
            beta: self.beta,
            gamma: self.gamma,
            c_dim: self.c_dim,
            steps: self.steps,
            batch_size: self.batch_size,
            lr: self.lr,
            tc_lr: self.tc_lr,
            seed,
        };
        cfg.validate().map_err(|e| anyhow::anyhow!("stage1: {e}"))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Stage2Config {
    pub enabled: bool,
    /// `idgan`, `idgan_no_distill`, `idgan_e2e`, `gan`, `infogan`, `cgan`,
    /// or `vaegan`.
    pub mode: String,
    pub lambda: f64,
    pub beta: f64,
    pub s_dim: usize,
    pub steps: u64,
    pub batch_size: usize,
    pub g_lr: f64,
    pub d_lr: f64,
    pub d_steps_per_g: u32,
    /// `mirror` or `resnet`.
    pub arch: String,
}

impl Default for Stage2Config {
    fn default() -> Self {
        Stage2Config {
            enabled: true,
            mode: "idgan".into(),
            lambda: 0.1,
            beta: 1.0,
            s_dim: 10,
            steps: 50_000,
            batch_size: 64,
            g_lr: 1e-4,
            d_lr: 4e-4,
            d_steps_per_g: 1,
            arch: "mirror".into(),
        }
    }
}

impl Stage2Config {
    pub fn mode(&self) -> Result<StageTwoMode> {
        Ok(match self.mode.as_str() {
            "idgan" => StageTwoMode::IdGan,
            "idgan_no_distill" => StageTwoMode::IdGanNoDistill,
            "idgan_e2e" => StageTwoMode::IdGanE2e,
            "gan" => StageTwoMode::Gan,
            "infogan" => StageTwoMode::InfoGan,
            "cgan" => StageTwoMode::CGan,
            "vaegan" => StageTwoMode::VaeGan,
            other => bail!("stage2.mode: unknown mode `{other}`"),
        })
    }

    pub fn arch(&self) -> Result<GanMode> {
        Ok(match self.arch.as_str() {
            "mirror" => GanMode::Mirror,
            "resnet" => GanMode::Resnet,
            other => bail!("stage2.arch: unknown architecture `{other}`"),
        })
    }

    pub fn to_core(&self, c_dim: usize, seed: u64) -> Result<GANStageConfig> {
        let cfg = GANStageConfig {
            mode: self.mode()?,
            lambda: self.lambda,
            beta: self.beta,
            c_dim,
            s_dim: self.s_dim,
            steps: self.steps,
            batch_size: self.batch_size,
            g_lr: self.g_lr,
            d_lr: self.d_lr,
            d_steps_per_g: self.d_steps_per_g,
            seed,
            arch: self.arch()?,
        };
        cfg.validate().map_err(|e| anyhow::anyhow!("stage2: {e}"))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Any of `fvm`, `mig`, `fid`, `rid`, `gilbo`.
    pub metrics: Vec<String>,
    pub seed: u64,
    pub fvm_votes: usize,
    pub fvm_samples_per_vote: usize,
    /// Code dimensions whose variance falls below this are pruned.
    pub fvm_variance_threshold: f64,
    pub mig_bins: usize,
    pub fid_samples: usize,
    pub predictor_steps: u64,
    pub predictor_batch: usize,
    pub rid_samples: usize,
    pub gilbo_steps: u64,
    pub gilbo_batch: usize,
    pub gilbo_final_eval: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            metrics: vec!["fvm".into(), "mig".into(), "fid".into(), "rid".into()],
            seed: 0,
            fvm_votes: 800,
            fvm_samples_per_vote: 100,
            fvm_variance_threshold: 0.05,
            mig_bins: 20,
            fid_samples: 1024,
            predictor_steps: 20_000,
            predictor_batch: 64,
            rid_samples: 1024,
            gilbo_steps: 5_000,
            gilbo_batch: 64,
            gilbo_final_eval: 1024,
        }
    }
}

/// The whole experiment: dataset, both stages, evaluation, and the seed list.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub eval: EvalConfig,
    pub seeds: Vec<u64>,
    /// Output root; overridden by `--out`, falling back to `ID_DISTILL_HOME`
    /// and then `./id-distill-out`.
    pub out_dir: Option<String>,
}

const KNOWN_METRICS: &[&str] = &["fvm", "mig", "fid", "rid", "gilbo"];
const FACTOR_METRICS: &[&str] = &["fvm", "mig", "fid"];

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds: at least one seed is required");
        }
        {
            let mut sorted = self.seeds.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != self.seeds.len() {
                bail!("seeds: duplicate seeds would overwrite each other's runs");
            }
        }
        match self.dataset.source.as_str() {
            "dsprites" => {
                self.dataset.factor_space()?;
                self.dataset.variant_config()?;
            }
            "folder" => {
                if self.dataset.folder.is_none() {
                    bail!("dataset.folder: required when source = \"folder\"");
                }
            }
            other => bail!("dataset.source: unknown source `{other}`"),
        }
        if self.dataset.resolution == 0 {
            bail!("dataset.resolution: must be positive");
        }
        for m in &self.eval.metrics {
            if !KNOWN_METRICS.contains(&m.as_str()) {
                bail!("eval.metrics: unknown metric `{m}` (known: {KNOWN_METRICS:?})");
            }
            if !self.dataset.has_factors() && FACTOR_METRICS.contains(&m.as_str()) {
                bail!("eval.metrics: `{m}` needs ground-truth factors, which `folder` datasets lack");
            }
        }
        if self.stage1.enabled {
            self.stage1.to_core(0)?;
        }
        if self.stage2.enabled {
            let s2 = self.stage2.to_core(self.stage1.c_dim.max(1), 0)?;
            if s2.mode.needs_encoder() && !self.stage1.enabled {
                bail!("stage2.mode: `{}` needs a stage-1 encoder, but stage1.enabled = false", self.stage2.mode);
            }
        }
        if !self.stage1.enabled && !self.stage2.enabled {
            bail!("stage1/stage2: at least one stage must be enabled");
        }
        Ok(())
    }

    /// Hash of the normalized (re-serialized) config; the run-directory key.
    pub fn hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        hex[..16].to_string()
    }

    /// Human-readable method label used by report tables.
    pub fn label(&self) -> String {
        if self.stage2.enabled {
            match self.stage2.mode.as_str() {
                "idgan" | "idgan_e2e" | "infogan" => {
                    format!("{}(lambda={})", self.stage2.mode, self.stage2.lambda)
                }
                m => m.to_string(),
            }
        } else {
            format!("{}(beta={})", self.stage1.objective, self.stage1.beta)
        }
    }

    /// Resolve the output root: `--out` flag, then the config's `out_dir`,
    /// then `ID_DISTILL_HOME`, then `./id-distill-out`.
    pub fn out_root(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.out_dir {
            return PathBuf::from(p);
        }
        if let Ok(home) = std::env::var("ID_DISTILL_HOME") {
            if !home.is_empty() {
                return PathBuf::from(home);
            }
        }
        PathBuf::from("id-distill-out")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
