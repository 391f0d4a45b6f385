//! Mutual-information gap over equal-count code bins.

use ndarray::Array2;

use crate::data::DatasetHandle;
use crate::{Error, Result};

use super::latent::{encode_dataset, LatentMap};

/// Which "runner-up" the gap subtracts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MigGap {
    /// Gap to the second-highest mutual information (the convention used for
    /// reported scores).
    SecondHighest,
    /// Gap to the minimum over the other dimensions (a strictly larger,
    /// rarely used variant kept for comparison).
    LiteralMin,
}

/// Equal-count discretization that keeps ties together: bin edges sit at the
/// empirical quantiles, and every occurrence of a value lands in one bin.
fn equal_count_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let edges: Vec<f64> = (1..bins).map(|i| sorted[i * n / bins]).collect();
    values
        .iter()
        .map(|&v| edges.iter().take_while(|&&e| v >= e).count())
        .collect()
}

fn entropy_from_counts(counts: &[usize], total: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// Empirical mutual information between two discrete label sequences.
fn mutual_information(a: &[usize], a_card: usize, b: &[usize], b_card: usize) -> f64 {
    let n = a.len() as f64;
    let mut joint = vec![0usize; a_card * b_card];
    let mut ma = vec![0usize; a_card];
    let mut mb = vec![0usize; b_card];
    for (&x, &y) in a.iter().zip(b.iter()) {
        joint[x * b_card + y] += 1;
        ma[x] += 1;
        mb[y] += 1;
    }
    let mut mi = 0.0;
    for x in 0..a_card {
        for y in 0..b_card {
            let c = joint[x * b_card + y];
            if c > 0 {
                let pxy = c as f64 / n;
                let px = ma[x] as f64 / n;
                let py = mb[y] as f64 / n;
                mi += pxy * (pxy / (px * py)).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Gap score with the reported convention (second-highest runner-up).
pub fn mig_score(map: &mut dyn LatentMap, dataset: &DatasetHandle, bins: usize) -> Result<f64> {
    mig_score_with(map, dataset, bins, MigGap::SecondHighest)
}

/// For each factor: normalized mutual information of every code dimension
/// (discretized into `bins` equal-count bins), then the normalized gap
/// between the best dimension and the runner-up, averaged over factors with
/// nonzero entropy.
pub fn mig_score_with(
    map: &mut dyn LatentMap,
    dataset: &DatasetHandle,
    bins: usize,
    gap: MigGap,
) -> Result<f64> {
    if bins < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 bins, got {bins}")));
    }
    let space = dataset
        .factor_space
        .as_ref()
        .ok_or_else(|| Error::Unsupported("the information-gap metric needs factor annotations".into()))?
        .clone();
    let table = dataset
        .factor_table
        .as_ref()
        .ok_or_else(|| Error::Unsupported("the information-gap metric needs a factor table".into()))?
        .clone();

    let codes: Array2<f64> = encode_dataset(map, dataset, None)?;
    let n = codes.nrows();
    let dims = codes.ncols();
    if dims < 2 {
        return Err(Error::InvalidInput("need at least two code dimensions for a gap".into()));
    }

    let binned: Vec<Vec<usize>> = (0..dims)
        .map(|j| equal_count_bins(&codes.column(j).to_vec(), bins))
        .collect();

    let mut total = 0.0;
    let mut scored = 0usize;
    for (k, &card) in space.cardinalities().iter().enumerate() {
        if card < 2 {
            continue;
        }
        let labels: Vec<usize> = (0..n).map(|i| table[[i, k]] as usize).collect();
        let mut counts = vec![0usize; card];
        for &l in &labels {
            counts[l] += 1;
        }
        let h = entropy_from_counts(&counts, n as f64);
        if h <= 0.0 {
            continue;
        }
        let mi: Vec<f64> = (0..dims)
            .map(|j| mutual_information(&binned[j], bins, &labels, card))
            .collect();
        let best = (0..dims)
            .max_by(|&a, &b| mi[a].partial_cmp(&mi[b]).unwrap())
            .unwrap();
        let runner_up = match gap {
            MigGap::SecondHighest => (0..dims)
                .filter(|&j| j != best)
                .map(|j| mi[j])
                .fold(f64::NEG_INFINITY, f64::max),
            MigGap::LiteralMin => (0..dims)
                .filter(|&j| j != best)
                .map(|j| mi[j])
                .fold(f64::INFINITY, f64::min),
        };
        total += (mi[best] - runner_up) / h;
        scored += 1;
    }
    if scored == 0 {
        return Err(Error::Unsupported("no factor has more than one value".into()));
    }
    Ok(total / scored as f64)
}
