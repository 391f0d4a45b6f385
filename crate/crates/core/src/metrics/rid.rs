//! Monte-Carlo estimate of the distillation alignment: how well the frozen
//! encoder recovers the conditioning code from generated images.

use ndarray::{Array2, ArrayD};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::DatasetHandle;
use crate::nets::{split_gaussian, ArchitectureSpec, NetworkHandle};
use crate::nn::bilinear_resize;
use crate::train::{aggregated_posterior_sample, compose_z, LatentCode};
use crate::{Error, Result};

const LOG_2PI: f64 = 1.8378770664093453;

/// Mean log-density with its Monte-Carlo standard error (the constant code
/// entropy is excluded throughout).
#[derive(Debug, Clone, Copy)]
pub struct RidEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

/// Whether a generator emits `[-1, 1]` (tanh) instead of `[0, 1]` images.
pub(crate) fn emits_signed_images(spec: &ArchitectureSpec) -> bool {
    spec.layers
        .iter()
        .any(|l| l.kind == "tanh" || l.activation == "tanh")
}

/// Per-sample `log q(c | images)` under the encoder's diagonal-Gaussian
/// posterior, bridging resolutions bilinearly when they differ.
pub(crate) fn log_posterior_density(
    encoder: &mut NetworkHandle<f32>,
    images_unit: &ArrayD<f32>,
    c: &Array2<f32>,
) -> Result<Vec<f64>> {
    let enc_res = *encoder
        .spec
        .input_shape
        .last()
        .ok_or_else(|| Error::InvalidState("encoder has no input shape".into()))?;
    let img_res = *images_unit
        .shape()
        .last()
        .ok_or_else(|| Error::Shape("image batch has no spatial axis".into()))?;
    let bridged = if img_res != enc_res {
        bilinear_resize(images_unit, enc_res, enc_res)?
    } else {
        images_unit.clone()
    };
    let out = encoder.forward(&bridged)?;
    let (mu, lv) = split_gaussian(&out)?;
    if mu.raw_dim() != c.raw_dim() {
        return Err(Error::Shape(format!(
            "code batch {:?} does not match posterior {:?}",
            c.shape(),
            mu.shape()
        )));
    }
    Ok((0..c.nrows())
        .map(|i| {
            (0..c.ncols())
                .map(|j| {
                    let m = f64::from(mu[[i, j]]);
                    let l = f64::from(lv[[i, j]]);
                    let d = f64::from(c[[i, j]]) - m;
                    -0.5 * (LOG_2PI + l + d * d * (-l).exp())
                })
                .sum()
        })
        .collect())
}

/// Estimate the alignment over `n` draws: codes from the encoder's
/// aggregated posterior, nuisance from the prior, images from the generator.
pub fn estimate_r_id(
    generator: &mut NetworkHandle<f32>,
    encoder: &mut NetworkHandle<f32>,
    dataset: &DatasetHandle,
    n: usize,
    seed: u64,
) -> Result<RidEstimate> {
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 draws for a standard error".into()));
    }
    let z2 = generator
        .spec
        .input_shape
        .first()
        .copied()
        .ok_or_else(|| Error::InvalidState("generator has no input shape".into()))?;
    let c_dim = encoder.spec.c_dim;
    if z2 < c_dim {
        return Err(Error::InvalidConfig(format!(
            "generator latent width {z2} is smaller than the code width {c_dim}"
        )));
    }
    let s_dim = z2 - c_dim;
    let signed = emits_signed_images(&generator.spec);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n);
    let mut done = 0usize;
    while done < n {
        let chunk = (n - done).min(64);
        let c = aggregated_posterior_sample::<f32>(encoder, dataset, chunk, &mut rng)?;
        let s = super::gilbo::standard_normal(chunk, s_dim, &mut rng);
        let z = compose_z(&LatentCode { s, c: c.clone() })?;
        let images = generator.forward(&z)?;
        let unit = if signed {
            images.mapv(|v| 0.5 * (v + 1.0))
        } else {
            images
        };
        values.extend(log_posterior_density(encoder, &unit, &c)?);
        done += chunk;
    }

    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    Ok(RidEstimate {
        mean,
        std_error: (var / n as f64).sqrt(),
        n,
    })
}
