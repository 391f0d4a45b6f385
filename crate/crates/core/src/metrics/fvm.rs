//! Fixed-factor majority-vote disentanglement score.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{sample_fixed_factor_indices, DatasetHandle};
use crate::{Error, Result};

use super::latent::{encode_dataset, LatentMap};

/// One vote: the factor that was held fixed and the latent dimension with
/// the smallest normalized variance under that intervention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteRecord {
    pub fixed_factor: usize,
    pub winning_dim: usize,
}

/// Tunable knobs of the vote procedure; defaults follow the evaluation
/// recipe used throughout.
#[derive(Debug, Clone)]
pub struct FvmConfig {
    pub votes: usize,
    pub samples_per_vote: usize,
    /// Dimensions whose global variance falls below this are treated as
    /// collapsed and excluded.
    pub variance_threshold: f64,
}

impl Default for FvmConfig {
    fn default() -> Self {
        FvmConfig {
            votes: 800,
            samples_per_vote: 100,
            variance_threshold: 0.05,
        }
    }
}

fn column_variances(codes: &ndarray::Array2<f64>) -> Vec<f64> {
    let n = codes.nrows() as f64;
    (0..codes.ncols())
        .map(|j| {
            let col = codes.column(j);
            let mean = col.sum() / n;
            col.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n
        })
        .collect()
}

/// Majority-vote score with the default configuration.
pub fn fvm_score(map: &mut dyn LatentMap, dataset: &DatasetHandle, seed: u64) -> Result<f64> {
    fvm_score_with(map, dataset, &FvmConfig::default(), seed).map(|(score, _)| score)
}

/// Majority-vote score plus the raw votes:
/// 1. global per-dimension variances of the codes over the full dataset;
/// 2. dimensions below the variance threshold are pruned as collapsed;
/// 3. each vote fixes one factor value, encodes a fresh sample batch, and
///    elects the active dimension with the smallest variance relative to its
///    global variance;
/// 4. the score is the training accuracy of the majority-vote classifier
///    from winning dimension to fixed factor.
pub fn fvm_score_with(
    map: &mut dyn LatentMap,
    dataset: &DatasetHandle,
    cfg: &FvmConfig,
    seed: u64,
) -> Result<(f64, Vec<VoteRecord>)> {
    let space = dataset
        .factor_space
        .as_ref()
        .ok_or_else(|| Error::Unsupported("the vote metric needs factor annotations".into()))?;
    if cfg.votes == 0 || cfg.samples_per_vote < 2 {
        return Err(Error::InvalidConfig(
            "need at least one vote and two samples per vote".into(),
        ));
    }

    let global = column_variances(&encode_dataset(map, dataset, None)?);
    let active: Vec<usize> = global
        .iter()
        .enumerate()
        .filter(|&(_, &v)| v >= cfg.variance_threshold)
        .map(|(j, _)| j)
        .collect();
    if active.is_empty() {
        return Err(Error::InvalidState(
            "every latent dimension is collapsed (variance below threshold)".into(),
        ));
    }

    // Only factors that actually vary can be intervened on.
    let eligible: Vec<usize> = space
        .cardinalities()
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c >= 2)
        .map(|(k, _)| k)
        .collect();
    if eligible.is_empty() {
        return Err(Error::Unsupported("no factor has more than one value".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut votes = Vec::with_capacity(cfg.votes);
    let mut counts = vec![vec![0usize; space.cardinalities().len()]; map.code_dim()];
    for _ in 0..cfg.votes {
        let factor = eligible[rng.gen_range(0..eligible.len())];
        let value = rng.gen_range(0..space.cardinalities()[factor]);
        let indices =
            sample_fixed_factor_indices(dataset, factor, value, cfg.samples_per_vote, rng.gen())?;
        let codes = map.encode_indices(dataset, &indices)?;
        let local = column_variances(&codes);
        let winner = active
            .iter()
            .copied()
            .min_by(|&a, &b| {
                let na = local[a] / global[a];
                let nb = local[b] / global[b];
                na.partial_cmp(&nb).expect("variances are finite")
            })
            .expect("at least one active dimension");
        counts[winner][factor] += 1;
        votes.push(VoteRecord {
            fixed_factor: factor,
            winning_dim: winner,
        });
    }

    let correct: usize = counts
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .sum();
    Ok((correct as f64 / cfg.votes as f64, votes))
}
