//! Stage 1: train an encoder/decoder pair on a dataset with a VAE-family
//! objective (plain VAE, beta-weighted KL, or the factorized variant with a
//! total-correlation discriminator).

use ndarray::ArrayD;

use crate::data::DatasetHandle;
use crate::nets::{build_decoder, build_encoder, build_tc_discriminator, NetworkHandle};
use crate::nn::{Adam, Scalar};
use crate::{Error, Result};

use super::losses::{permute_latents, standard_normal_matrix, tc_disc_grad, vae_backprop};
use super::{stream_rng, LossCurve, TrainState};

/// Random-stream identifiers, kept distinct so draws never alias.
pub(crate) const STREAM_DATA: u64 = 1;
pub(crate) const STREAM_EPS: u64 = 2;
pub(crate) const STREAM_PERM: u64 = 3;
pub(crate) const STREAM_INIT: u64 = 0;

/// Which stage-1 objective to optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VaeObjective {
    /// Evidence bound with unit KL weight.
    Vae,
    /// KL term scaled by `beta`.
    BetaVae,
    /// `beta`-weighted KL plus a `gamma`-weighted total-correlation penalty
    /// estimated by an adversarial density-ratio discriminator.
    FactorVae,
}

/// Configuration for one stage-1 run.
#[derive(Debug, Clone)]
pub struct VAEStageConfig {
    pub objective: VaeObjective,
    pub beta: f64,
    /// Total-correlation weight; only meaningful for [`VaeObjective::FactorVae`].
    pub gamma: f64,
    pub c_dim: usize,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate of the total-correlation discriminator.
    pub tc_lr: f64,
    pub seed: u64,
}

impl Default for VAEStageConfig {
    fn default() -> Self {
        VAEStageConfig {
            objective: VaeObjective::BetaVae,
            beta: 4.0,
            gamma: 0.0,
            c_dim: 10,
            steps: 1,
            batch_size: 64,
            lr: 1e-4,
            tc_lr: 1e-4,
            seed: 0,
        }
    }
}

impl VAEStageConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c_dim == 0 {
            return Err(Error::InvalidConfig("c_dim must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be at least 2".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.objective == VaeObjective::Vae && self.beta != 1.0 {
            return Err(Error::InvalidConfig(format!(
                "the plain VAE objective fixes beta = 1, got {}",
                self.beta
            )));
        }
        if self.objective != VaeObjective::FactorVae && self.gamma != 0.0 {
            return Err(Error::InvalidConfig(format!(
                "gamma = {} is only meaningful for the factorized objective",
                self.gamma
            )));
        }
        if self.objective == VaeObjective::FactorVae && !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "the factorized objective needs a positive finite gamma, got {}",
                self.gamma
            )));
        }
        if !(self.lr > 0.0) || !(self.tc_lr > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// The artifacts of a stage-1 run.
pub struct Stage1Run<T: Scalar> {
    pub encoder: NetworkHandle<T>,
    pub decoder: NetworkHandle<T>,
    /// Total-correlation discriminator; present only for the factorized
    /// objective.
    pub tc: Option<NetworkHandle<T>>,
    pub curve: LossCurve,
    pub state: TrainState,
}

/// Evaluate the beta-weighted evidence-bound loss of an encoder/decoder pair
/// on one batch, returning `(total, reconstruction, kl)`. Reparameterization
/// noise is drawn from `seed` so repeated calls are deterministic.
pub fn vae_loss<T: Scalar>(
    batch: &ArrayD<T>,
    encoder: &mut NetworkHandle<T>,
    decoder: &mut NetworkHandle<T>,
    beta: f64,
    seed: u64,
) -> Result<(f64, f64, f64)> {
    let enc_out = encoder.forward(batch)?;
    let (mu, lv) = crate::nets::split_gaussian(&enc_out)?;
    let mut rng = stream_rng(seed, STREAM_EPS, 0);
    let eps = standard_normal_matrix::<T>(mu.nrows(), mu.ncols(), &mut rng);
    let half = T::from_f64(0.5);
    let c = &mu + &(&eps * &lv.mapv(|l| (l * half).exp()));
    let logits = decoder.forward(&c.into_dyn())?;
    let (recon, _) = super::losses::bernoulli_nll_grad(batch, &logits)?;
    let (kl, _, _) = super::losses::gaussian_kl_grad(&mu, &lv);
    Ok((recon + beta * kl, recon, kl))
}

fn sample_batch_indices(len: usize, batch: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<usize> {
    use rand::Rng;
    (0..batch).map(|_| rng.gen_range(0..len)).collect()
}

fn capture_state<T: Scalar>(
    step: u64,
    parts: &[(&str, &NetworkHandle<T>, &Adam<T>)],
) -> TrainState {
    TrainState {
        step,
        params: parts
            .iter()
            .map(|(name, net, _)| {
                (
                    name.to_string(),
                    net.net.flat_params().iter().map(|&v| Scalar::to_f64(v) as f32).collect(),
                )
            })
            .collect(),
        opts: parts
            .iter()
            .map(|(name, _, opt)| (name.to_string(), opt.state()))
            .collect(),
    }
}

fn restore_part<T: Scalar>(
    state: &TrainState,
    name: &str,
    net: &mut NetworkHandle<T>,
    opt: &mut Adam<T>,
) -> Result<()> {
    let params = state
        .params_of(name)
        .ok_or_else(|| Error::InvalidState(format!("resume state has no parameters for `{name}`")))?;
    let flat = ndarray::Array1::from_iter(params.iter().map(|&v| T::from_f64(v as f64)));
    net.net.set_flat_params(&flat)?;
    let opt_state = state
        .opt_of(name)
        .ok_or_else(|| Error::InvalidState(format!("resume state has no optimizer for `{name}`")))?;
    opt.restore(opt_state);
    Ok(())
}

/// Train the stage-1 model. `resume` continues a run from a saved state; the
/// resumed trajectory is bit-identical (in `f32`) to an uninterrupted run
/// with the same config.
pub fn run_vae_stage<T: Scalar>(
    cfg: &VAEStageConfig,
    dataset: &DatasetHandle,
    resume: Option<&TrainState>,
) -> Result<Stage1Run<T>> {
    cfg.validate()?;
    if dataset.len() == 0 {
        return Err(Error::InvalidInput("stage-1 training needs a non-empty dataset".into()));
    }
    if dataset.resolution() != 64 {
        return Err(Error::InvalidConfig(format!(
            "the convolutional encoder expects 64x64 inputs, dataset is {0}x{0}",
            dataset.resolution()
        )));
    }

    let mut init_rng = stream_rng(cfg.seed, STREAM_INIT, 0);
    let mut encoder = build_encoder::<T>(cfg.c_dim, dataset.channels(), &mut init_rng)?;
    let mut decoder = build_decoder::<T>(cfg.c_dim, dataset.channels(), &mut init_rng)?;
    let mut tc = if cfg.objective == VaeObjective::FactorVae {
        Some(build_tc_discriminator::<T>(cfg.c_dim, &mut init_rng)?)
    } else {
        None
    };

    let mut enc_opt = Adam::<T>::new(encoder.net.flat_params().len(), cfg.lr, 0.9, 0.999);
    let mut dec_opt = Adam::<T>::new(decoder.net.flat_params().len(), cfg.lr, 0.9, 0.999);
    let mut tc_opt = tc
        .as_ref()
        .map(|t| Adam::<T>::new(t.net.flat_params().len(), cfg.tc_lr, 0.5, 0.999));

    let mut start_step = 0u64;
    if let Some(state) = resume {
        restore_part(state, "encoder", &mut encoder, &mut enc_opt)?;
        restore_part(state, "decoder", &mut decoder, &mut dec_opt)?;
        if let (Some(t), Some(opt)) = (tc.as_mut(), tc_opt.as_mut()) {
            restore_part(state, "tc", t, opt)?;
        }
        start_step = state.step;
    }

    let mut curve = LossCurve::default();
    for step in start_step..cfg.steps {
        let mut data_rng = stream_rng(cfg.seed, STREAM_DATA, step);
        let indices = sample_batch_indices(dataset.len(), cfg.batch_size, &mut data_rng);
        let batch = dataset.batch::<T>(&indices)?;

        let mut eps_rng = stream_rng(cfg.seed, STREAM_EPS, step);
        let eps = standard_normal_matrix::<T>(cfg.batch_size, cfg.c_dim, &mut eps_rng);

        let out = vae_backprop(
            &mut encoder,
            &mut decoder,
            &batch,
            cfg.beta,
            &eps,
            tc.as_mut().map(|t| (t, cfg.gamma)),
            step,
        )?;

        let mut p = encoder.net.flat_params();
        enc_opt.step(&mut p, &out.enc_grad);
        encoder.net.set_flat_params(&p)?;
        let mut p = decoder.net.flat_params();
        dec_opt.step(&mut p, &out.dec_grad);
        decoder.net.set_flat_params(&p)?;

        curve.push(step, "total", out.total);
        curve.push(step, "recon", out.recon);
        curve.push(step, "kl", out.kl);

        if let (Some(t), Some(opt)) = (tc.as_mut(), tc_opt.as_mut()) {
            curve.push(step, "tc_penalty", out.tc_penalty);
            let mut perm_rng = stream_rng(cfg.seed, STREAM_PERM, step);
            let permuted = permute_latents(&out.c, &mut perm_rng)?;
            let (tc_loss, tc_grad) = tc_disc_grad(&out.c, &permuted, t)?;
            let mut p = t.net.flat_params();
            opt.step(&mut p, &tc_grad);
            t.net.set_flat_params(&p)?;
            curve.push(step, "tc_disc", tc_loss);
        }
    }

    let mut parts: Vec<(&str, &NetworkHandle<T>, &Adam<T>)> =
        vec![("encoder", &encoder, &enc_opt), ("decoder", &decoder, &dec_opt)];
    if let (Some(t), Some(opt)) = (tc.as_ref(), tc_opt.as_ref()) {
        parts.push(("tc", t, opt));
    }
    let state = capture_state(cfg.steps.max(start_step), &parts);

    Ok(Stage1Run {
        encoder,
        decoder,
        tc,
        curve,
        state,
    })
}
