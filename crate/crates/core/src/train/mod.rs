//! Two-stage training: stage 1 learns a disentangled code with a VAE-family
//! objective; stage 2 trains a GAN generator on `z = (s, c)` with an optional
//! information-distillation regularizer tying the generator output back to
//! the stage-1 encoder. All baselines and ablation modes live here too.
//!
//! Determinism: every random draw comes from a stream derived from the
//! configured seed and the step index, so a resumed run replays the exact
//! byte-for-byte trajectory of an uninterrupted one (training is in `f32`).

mod losses;
mod sampling;
mod stage1;
mod stage2;

#[cfg(test)]
mod tests;

pub use losses::{
    factor_tc_penalty, gan_step, permute_latents, r_id_loss, tc_discriminator_accuracy,
    tc_discriminator_loss, GanStepOutcome,
};
pub use sampling::{aggregated_posterior_sample, compose_z, prior_sample, split_z, LatentCode};
pub use stage1::{run_vae_stage, Stage1Run, VAEStageConfig, VaeObjective};
pub use stage1::vae_loss;
pub use stage2::{run_gan_stage, GANStageConfig, Stage2Inputs, Stage2Run, StageTwoMode};

pub(crate) use losses::r_id_backprop;

use serde::{Deserialize, Serialize};

use crate::nn::AdamState;

/// A loss-curve record: `(step, term, value)` rows, serializable as CSV.
#[derive(Debug, Clone, Default)]
pub struct LossCurve {
    pub rows: Vec<(u64, String, f64)>,
}

impl LossCurve {
    pub fn push(&mut self, step: u64, term: &str, value: f64) {
        self.rows.push((step, term.to_string(), value));
    }

    /// Latest value of a term, if any was recorded.
    pub fn last(&self, term: &str) -> Option<f64> {
        self.rows.iter().rev().find(|(_, t, _)| t == term).map(|&(_, _, v)| v)
    }

    /// All values of one term in step order.
    pub fn series(&self, term: &str) -> Vec<(u64, f64)> {
        self.rows
            .iter()
            .filter(|(_, t, _)| t == term)
            .map(|&(s, _, v)| (s, v))
            .collect()
    }

    /// Append rows as `step,term,value` CSV; writes a header when creating.
    pub fn write_csv(&self, path: &std::path::Path) -> crate::Result<()> {
        use std::io::Write;
        let fresh = !path.exists();
        let mut f = std::io::BufWriter::new(
            std::fs::OpenOptions::new().create(true).append(true).open(path)?,
        );
        if fresh {
            writeln!(f, "step,term,value")?;
        }
        for (step, term, value) in &self.rows {
            writeln!(f, "{step},{term},{value}")?;
        }
        Ok(())
    }
}

/// Resumable snapshot of a training run: parameters and optimizer moments by
/// component name, plus the step counter. Random streams are derived from
/// (seed, step), so no RNG state needs to be stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub step: u64,
    pub params: Vec<(String, Vec<f32>)>,
    pub opts: Vec<(String, AdamState)>,
}

impl TrainState {
    pub fn params_of(&self, name: &str) -> Option<&[f32]> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, p)| p.as_slice())
    }

    pub fn opt_of(&self, name: &str) -> Option<&AdamState> {
        self.opts.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn save_json(&self, path: &std::path::Path) -> crate::Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| crate::Error::InvalidState(format!("state serialization failed: {e}")))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> crate::Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        serde_json::from_str(&raw)
            .map_err(|e| crate::Error::format("train state", format!("invalid JSON: {e}")))
    }
}

/// Derive the per-step RNG for a named stream, keeping data sampling,
/// reparameterization noise, latent draws, and permutations independent.
pub(crate) fn stream_rng(seed: u64, stream: u64, step: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mixed = seed
        ^ stream.wrapping_mul(0xA076_1D64_78BD_642F)
        ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    rand_chacha::ChaCha8Rng::seed_from_u64(mixed)
}
