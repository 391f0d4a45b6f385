//! Latent sampling: prior draws, aggregated-posterior draws through a trained
//! encoder, and the `z = [s | c]` composition used by stage-2 generators.

use ndarray::{s, Array2, ArrayD, Ix2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::DatasetHandle;
use crate::nets::NetworkHandle;
use crate::nn::Scalar;
use crate::{Error, Result};

use super::losses::standard_normal_matrix;

/// A batch of generator latents: the nuisance part `s` and the disentangled
/// code part `c`, kept separate until composed into `z = [s | c]`.
#[derive(Debug, Clone)]
pub struct LatentCode<T> {
    pub s: Array2<T>,
    pub c: Array2<T>,
}

impl<T: Scalar> LatentCode<T> {
    pub fn batch_size(&self) -> usize {
        self.s.nrows()
    }
}

/// Standard-normal draws for both latent parts.
pub fn prior_sample<T: Scalar>(
    n: usize,
    s_dim: usize,
    c_dim: usize,
    rng: &mut ChaCha8Rng,
) -> LatentCode<T> {
    LatentCode {
        s: standard_normal_matrix(n, s_dim, rng),
        c: standard_normal_matrix(n, c_dim, rng),
    }
}

/// Draw `n` codes from the aggregated posterior: pick dataset images uniformly
/// at random, encode them, and sample `c = mu + eps * exp(lv / 2)` per image.
pub fn aggregated_posterior_sample<T: Scalar>(
    encoder: &mut NetworkHandle<T>,
    dataset: &DatasetHandle,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<T>> {
    if dataset.len() == 0 {
        return Err(Error::InvalidInput(
            "aggregated posterior sampling needs a non-empty dataset".into(),
        ));
    }
    if n == 0 {
        return Err(Error::InvalidInput("requested 0 aggregated-posterior samples".into()));
    }
    let c_dim = encoder.spec.c_dim;
    let mut out = Array2::<T>::zeros((n, c_dim));
    let mut done = 0usize;
    while done < n {
        let chunk = (n - done).min(64);
        let indices: Vec<usize> = (0..chunk).map(|_| rng.gen_range(0..dataset.len())).collect();
        let images = dataset.batch::<T>(&indices)?;
        let enc_out = encoder.forward(&images)?;
        let (mu, lv) = crate::nets::split_gaussian(&enc_out)?;
        let eps = standard_normal_matrix::<T>(chunk, c_dim, rng);
        let half = T::from_f64(0.5);
        let c = &mu + &(&eps * &lv.mapv(|l| (l * half).exp()));
        out.slice_mut(s![done..done + chunk, ..]).assign(&c);
        done += chunk;
    }
    Ok(out)
}

/// Concatenate the latent parts into the generator input `z = [s | c]`.
pub fn compose_z<T: Scalar>(code: &LatentCode<T>) -> Result<ArrayD<T>> {
    if code.s.nrows() != code.c.nrows() {
        return Err(Error::Shape(format!(
            "latent parts disagree on batch size: s has {}, c has {}",
            code.s.nrows(),
            code.c.nrows()
        )));
    }
    let n = code.s.nrows();
    let s_dim = code.s.ncols();
    let c_dim = code.c.ncols();
    let mut z = Array2::<T>::zeros((n, s_dim + c_dim));
    z.slice_mut(s![.., ..s_dim]).assign(&code.s);
    z.slice_mut(s![.., s_dim..]).assign(&code.c);
    Ok(z.into_dyn())
}

/// Split a generator input back into `(s, c)` given the code width.
pub fn split_z<T: Scalar>(z: &ArrayD<T>, c_dim: usize) -> Result<LatentCode<T>> {
    let z2 = z
        .view()
        .into_dimensionality::<Ix2>()
        .map_err(|_| Error::Shape(format!("latent batch must be 2-D, got {:?}", z.shape())))?;
    if z2.ncols() < c_dim {
        return Err(Error::Shape(format!(
            "latent width {} is smaller than the code width {}",
            z2.ncols(),
            c_dim
        )));
    }
    let s_dim = z2.ncols() - c_dim;
    Ok(LatentCode {
        s: z2.slice(s![.., ..s_dim]).to_owned(),
        c: z2.slice(s![.., s_dim..]).to_owned(),
    })
}
