//! The image-to-code abstraction all disentanglement metrics score.

use ndarray::{Array2, ArrayD};

use crate::data::DatasetHandle;
use crate::nets::{split_gaussian, NetworkHandle};
use crate::Result;

/// A deterministic map from images to latent codes — for trained encoders
/// this is the posterior mean. Metrics only see this interface, so synthetic
/// oracle maps can stand in for real encoders in tests.
pub trait LatentMap {
    fn code_dim(&self) -> usize;

    /// Codes `[N, code_dim]` for an image batch `[N, C, H, W]`.
    fn encode_images(&mut self, images: &ArrayD<f32>) -> Result<Array2<f64>>;

    /// Codes for dataset rows by index; the default goes through the images.
    fn encode_indices(&mut self, dataset: &DatasetHandle, indices: &[usize]) -> Result<Array2<f64>> {
        self.encode_images(&dataset.batch::<f32>(indices)?)
    }
}

impl LatentMap for NetworkHandle<f32> {
    fn code_dim(&self) -> usize {
        self.spec.c_dim
    }

    fn encode_images(&mut self, images: &ArrayD<f32>) -> Result<Array2<f64>> {
        let out = self.forward(images)?;
        let (mu, _) = split_gaussian(&out)?;
        Ok(mu.mapv(f64::from))
    }
}

/// Encode a whole dataset (or a row subset) in fixed-size chunks.
pub fn encode_dataset(
    map: &mut dyn LatentMap,
    dataset: &DatasetHandle,
    indices: Option<&[usize]>,
) -> Result<Array2<f64>> {
    let all: Vec<usize>;
    let rows: &[usize] = match indices {
        Some(r) => r,
        None => {
            all = (0..dataset.len()).collect();
            &all
        }
    };
    if rows.is_empty() {
        return Err(crate::Error::InvalidInput("no rows to encode".into()));
    }
    let dim = map.code_dim();
    let mut out = Array2::<f64>::zeros((rows.len(), dim));
    for (offset, chunk) in rows.chunks(256).scan(0usize, |acc, c| {
        let o = *acc;
        *acc += c.len();
        Some((o, c))
    }) {
        let codes = map.encode_indices(dataset, chunk)?;
        out.slice_mut(ndarray::s![offset..offset + chunk.len(), ..])
            .assign(&codes);
    }
    Ok(out)
}
