//! Procedural sprite datasets: factor-grid generation, variant decoration,
//! indexing, persistence, and image-folder ingestion.
//!
//! Generated datasets carry a [`FactorSpace`] and a per-image factor table;
//! ingested folders carry neither, and factor-based metrics reject them.

mod factors;
mod io;
mod sprites;
mod variant;


pub use factors::FactorSpace;
pub use io::{ingest_image_folder, load_dataset, save_dataset};
pub use sprites::generate_dsprites;
pub use variant::apply_variant;

use ndarray::{Array2, Array4, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::nn::Scalar;
use crate::{Error, Result};

/// Decoration applied on top of the plain binary sprites.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantKind {
    Plain,
    Color,
    Noisy,
    ScreamLike,
}

/// Variant selection plus the seed that makes decoration reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariantConfig {
    pub kind: VariantKind,
    pub noise_seed: u64,
    pub color_levels: u32,
}

impl VariantConfig {
    pub fn plain() -> Self {
        VariantConfig {
            kind: VariantKind::Plain,
            noise_seed: 0,
            color_levels: 8,
        }
    }

    pub fn new(kind: VariantKind, noise_seed: u64, color_levels: u32) -> Result<Self> {
        if kind == VariantKind::Color && color_levels < 2 {
            return Err(Error::InvalidConfig(format!(
                "color variant needs at least 2 levels, got {color_levels}"
            )));
        }
        Ok(VariantConfig {
            kind,
            noise_seed,
            color_levels,
        })
    }
}

/// An in-memory dataset: images plus (for generated data) the factor space
/// and the per-image factor index table.
#[derive(Debug, Clone)]
pub struct DatasetHandle {
    pub factor_space: Option<FactorSpace>,
    /// `[N, H, W, C]` 8-bit intensities.
    pub images: Array4<u8>,
    /// `[N, K]` factor indices, present only for generated data.
    pub factor_table: Option<Array2<u16>>,
    pub variant: VariantConfig,
}

impl DatasetHandle {
    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn resolution(&self) -> usize {
        self.images.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.images.shape()[3]
    }

    /// Gather images at `indices` as a float `[n, C, H, W]` batch in [0, 1].
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> Result<ArrayD<T>> {
        let (n, h, w, c) = (
            indices.len(),
            self.images.shape()[1],
            self.images.shape()[2],
            self.images.shape()[3],
        );
        let mut out = ArrayD::<T>::zeros(IxDyn(&[n, c, h, w]));
        for (bi, &idx) in indices.iter().enumerate() {
            if idx >= self.len() {
                return Err(Error::InvalidInput(format!(
                    "image index {idx} out of range for dataset of {}",
                    self.len()
                )));
            }
            for ci in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        out[[bi, ci, i, j]] =
                            T::from_f64(self.images[[idx, i, j, ci]] as f64 / 255.0);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Factor indices of image `i`; errors for factor-less datasets.
    pub fn factors_of(&self, i: usize) -> Result<Vec<usize>> {
        let table = self.factor_table.as_ref().ok_or_else(|| {
            Error::Unsupported("dataset carries no factor annotations".into())
        })?;
        if i >= self.len() {
            return Err(Error::InvalidInput(format!("index {i} out of range")));
        }
        Ok(table.row(i).iter().map(|&v| v as usize).collect())
    }
}

/// Deterministic per-sample RNG stream: mixes the dataset seed with the
/// sample index so workers over disjoint slices agree with a serial run.
pub(crate) fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mixed = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    ChaCha8Rng::seed_from_u64(mixed)
}

/// Indices of `n` samples whose `factor`-th index equals `value`, all other
/// factors drawn uniformly; deterministic given `seed`.
pub fn sample_fixed_factor_indices(
    d: &DatasetHandle,
    factor: usize,
    value: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let space = d.factor_space.as_ref().ok_or_else(|| {
        Error::Unsupported("fixed-factor sampling needs factor annotations".into())
    })?;
    if factor >= space.num_factors() {
        return Err(Error::InvalidInput(format!(
            "factor {factor} out of range for {} factors",
            space.num_factors()
        )));
    }
    if value >= space.cardinalities()[factor] {
        return Err(Error::InvalidInput(format!(
            "value {value} out of range for factor {factor} (cardinality {})",
            space.cardinalities()[factor]
        )));
    }
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut v: Vec<usize> = space
            .cardinalities()
            .iter()
            .map(|&card| rng.gen_range(0..card))
            .collect();
        v[factor] = value;
        out.push(space.factors_to_index(&v)?);
    }
    Ok(out)
}

/// Image batch version of [`sample_fixed_factor_indices`].
pub fn sample_fixed_factor_batch(
    d: &DatasetHandle,
    factor: usize,
    value: usize,
    n: usize,
    seed: u64,
) -> Result<ArrayD<f32>> {
    let indices = sample_fixed_factor_indices(d, factor, value, n, seed)?;
    d.batch(&indices)
}
