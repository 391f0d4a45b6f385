//! Generative information bound: train a fresh auxiliary encoder to recover
//! the conditioning code from generated images and report the converged
//! mean log-density (code entropy excluded, matching the alignment
//! estimate's convention).

use ndarray::Array2;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::DatasetHandle;
use crate::nets::{build_encoder, NetworkHandle};
use crate::nn::Adam;
use crate::train::{aggregated_posterior_sample, compose_z, r_id_backprop, LatentCode};
use crate::{Error, Result};

use super::rid::{emits_signed_images, log_posterior_density};

pub(crate) fn standard_normal(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f32> {
    Array2::from_shape_simple_fn((n, d), || {
        let v: f64 = StandardNormal.sample(rng);
        v as f32
    })
}

/// Where the conditioning codes come from during the bound's optimization.
pub enum CodeSampler<'a> {
    /// Standard-normal codes.
    Prior,
    /// Codes from a trained encoder's aggregated posterior over a dataset.
    AggregatedPosterior {
        encoder: &'a mut NetworkHandle<f32>,
        dataset: &'a DatasetHandle,
    },
}

impl CodeSampler<'_> {
    fn draw(&mut self, n: usize, c_dim: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f32>> {
        match self {
            CodeSampler::Prior => Ok(standard_normal(n, c_dim, rng)),
            CodeSampler::AggregatedPosterior { encoder, dataset } => {
                if encoder.spec.c_dim != c_dim {
                    return Err(Error::InvalidConfig(format!(
                        "code source encoder width {} does not match requested width {c_dim}",
                        encoder.spec.c_dim
                    )));
                }
                aggregated_posterior_sample::<f32>(encoder, dataset, n, rng)
            }
        }
    }
}

/// Optimization budget for the auxiliary encoder.
#[derive(Debug, Clone)]
pub struct GilboConfig {
    pub c_dim: usize,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Evaluate the bound on a fresh batch every this many steps.
    pub eval_every: u64,
    /// Stop after this many consecutive evaluations without improvement.
    pub plateau_evals: usize,
    /// Minimum improvement that resets the plateau counter.
    pub plateau_tol: f64,
    /// Monte-Carlo draws for the final reported value.
    pub final_eval_n: usize,
}

impl Default for GilboConfig {
    fn default() -> Self {
        GilboConfig {
            c_dim: 10,
            steps: 5_000,
            batch_size: 64,
            lr: 1e-4,
            eval_every: 100,
            plateau_evals: 5,
            plateau_tol: 1e-3,
            final_eval_n: 1024,
        }
    }
}

/// The converged bound with its Monte-Carlo standard error.
#[derive(Debug, Clone, Copy)]
pub struct GilboOutcome {
    pub value: f64,
    pub std_error: f64,
    pub steps_run: u64,
}

/// Train an auxiliary encoder to maximize `mean log e(c | G(s, c))` for a
/// fixed generator. `warm_start` initializes the auxiliary encoder from an
/// existing one (e.g. the frozen distillation encoder) instead of fresh
/// weights.
pub fn gilbo(
    generator: &mut NetworkHandle<f32>,
    mut codes: CodeSampler<'_>,
    cfg: &GilboConfig,
    seed: u64,
    warm_start: Option<&NetworkHandle<f32>>,
) -> Result<GilboOutcome> {
    if cfg.c_dim == 0 || cfg.batch_size < 2 || cfg.final_eval_n < 2 {
        return Err(Error::InvalidConfig(
            "need a positive code width, batch size >= 2, and final_eval_n >= 2".into(),
        ));
    }
    let z_dim = generator
        .spec
        .input_shape
        .first()
        .copied()
        .ok_or_else(|| Error::InvalidState("generator has no input shape".into()))?;
    if z_dim < cfg.c_dim {
        return Err(Error::InvalidConfig(format!(
            "generator latent width {z_dim} is smaller than the code width {}",
            cfg.c_dim
        )));
    }
    let s_dim = z_dim - cfg.c_dim;
    let signed = emits_signed_images(&generator.spec);

    let mut rng = crate::train::stream_rng(seed, 21, 0);
    let channels = {
        let probe = compose_z(&LatentCode {
            s: standard_normal(1, s_dim, &mut rng),
            c: standard_normal(1, cfg.c_dim, &mut rng),
        })?;
        generator.forward(&probe)?.shape()[1]
    };
    let mut aux = match warm_start {
        Some(enc) => {
            if enc.spec.c_dim != cfg.c_dim {
                return Err(Error::InvalidConfig(
                    "warm-start encoder width does not match the code width".into(),
                ));
            }
            enc.clone()
        }
        None => build_encoder::<f32>(cfg.c_dim, channels, &mut rng)?,
    };
    let mut opt = Adam::<f32>::new(aux.net.flat_params().len(), cfg.lr, 0.9, 0.999);

    let generate = |gen: &mut NetworkHandle<f32>,
                        codes: &mut CodeSampler<'_>,
                        n: usize,
                        rng: &mut ChaCha8Rng|
     -> Result<(ndarray::ArrayD<f32>, Array2<f32>)> {
        let c = codes.draw(n, cfg.c_dim, rng)?;
        let s = standard_normal(n, s_dim, rng);
        let z = compose_z(&LatentCode { s, c: c.clone() })?;
        let images = gen.forward(&z)?;
        let unit = if signed {
            images.mapv(|v| 0.5 * (v + 1.0))
        } else {
            images
        };
        Ok((unit, c))
    };

    let mut best = f64::NEG_INFINITY;
    let mut stale = 0usize;
    let mut steps_run = 0u64;
    for step in 0..cfg.steps {
        let (images, c) = generate(generator, &mut codes, cfg.batch_size, &mut rng)?;
        let (loss, _, enc_grad) = r_id_backprop(&images, &c, &mut aux, true)?;
        if !loss.is_finite() {
            return Err(Error::TrainingFailure(format!(
                "auxiliary encoder diverged at step {step}"
            )));
        }
        let grad = enc_grad.expect("encoder gradient requested");
        let mut p = aux.net.flat_params();
        opt.step(&mut p, &grad);
        aux.net.set_flat_params(&p)?;
        steps_run = step + 1;

        if cfg.eval_every > 0 && steps_run % cfg.eval_every == 0 {
            let (images, c) = generate(generator, &mut codes, cfg.batch_size, &mut rng)?;
            let vals = log_posterior_density(&mut aux, &images, &c)?;
            let bound = vals.iter().sum::<f64>() / vals.len() as f64;
            if bound > best + cfg.plateau_tol {
                best = bound;
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.plateau_evals {
                    break;
                }
            }
        }
    }

    let mut values = Vec::with_capacity(cfg.final_eval_n);
    let mut done = 0usize;
    while done < cfg.final_eval_n {
        let chunk = (cfg.final_eval_n - done).min(64);
        let (images, c) = generate(generator, &mut codes, chunk, &mut rng)?;
        values.extend(log_posterior_density(&mut aux, &images, &c)?);
        done += chunk;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(GilboOutcome {
        value: mean,
        std_error: (var / n).sqrt(),
        steps_run,
    })
}
