//! Rebuilding trained networks from run-directory checkpoints.

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use id_distill_core::nets::{
    build_decoder, build_encoder, build_gan_pair, NetworkHandle,
};

use crate::config::ExperimentConfig;
use crate::manifest::RunDir;

/// The networks a completed run left behind. `encoder`/`decoder` are the
/// stage-1 pair; `stage2_encoder` is the encoder as stage 2 left it (frozen
/// copy, jointly trained, or auxiliary, depending on the mode).
pub struct LoadedRun {
    pub encoder: Option<NetworkHandle<f32>>,
    pub decoder: Option<NetworkHandle<f32>>,
    pub generator: Option<NetworkHandle<f32>>,
    pub stage2_encoder: Option<NetworkHandle<f32>>,
}

fn load_into(mut net: NetworkHandle<f32>, path: &std::path::Path) -> Result<NetworkHandle<f32>> {
    net.load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    Ok(net)
}

/// Rebuild every checkpointed network of one seed's run. The architectures
/// come from the config, the parameters from the `.idgc` files.
pub fn load_run(
    cfg: &ExperimentConfig,
    run: &RunDir,
    channels: usize,
    resolution: usize,
) -> Result<LoadedRun> {
    let ckpt = run.checkpoints();
    if !ckpt.exists() {
        bail!("run {} has no checkpoints directory", run.root.display());
    }
    // The rng only sets initial values that the checkpoint overwrites.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let c_dim = cfg.stage1.c_dim;

    let mut out = LoadedRun {
        encoder: None,
        decoder: None,
        generator: None,
        stage2_encoder: None,
    };
    let enc_path = ckpt.join("encoder.idgc");
    if enc_path.exists() {
        out.encoder = Some(load_into(build_encoder::<f32>(c_dim, channels, &mut rng)?, &enc_path)?);
    }
    let dec_path = ckpt.join("decoder.idgc");
    if dec_path.exists() {
        out.decoder = Some(load_into(build_decoder::<f32>(c_dim, channels, &mut rng)?, &dec_path)?);
    }
    let gen_path = ckpt.join("generator.idgc");
    if gen_path.exists() {
        let template = if cfg.stage2.mode()? == id_distill_core::train::StageTwoMode::VaeGan {
            build_decoder::<f32>(c_dim, channels, &mut rng)?
        } else {
            build_gan_pair::<f32>(
                cfg.stage2.arch()?,
                cfg.stage2.s_dim + c_dim,
                resolution,
                channels,
                &mut rng,
            )?
            .0
        };
        out.generator = Some(load_into(template, &gen_path)?);
    }
    let s2e_path = ckpt.join("stage2_encoder.idgc");
    if s2e_path.exists() {
        out.stage2_encoder =
            Some(load_into(build_encoder::<f32>(c_dim, channels, &mut rng)?, &s2e_path)?);
    }
    Ok(out)
}

/// Whether a generator's last layer emits `[-1, 1]` (tanh) images.
pub fn emits_signed_images(net: &NetworkHandle<f32>) -> bool {
    net.spec.layers.iter().any(|l| l.kind == "tanh" || l.activation == "tanh")
}
