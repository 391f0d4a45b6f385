use std::f64::consts::TAU;

use crate::{Error, Result};

/// The ordered ground-truth factor grid of a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSpace {
    names: Vec<String>,
    cardinalities: Vec<usize>,
    grids: Vec<Vec<f64>>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

impl FactorSpace {
    pub fn new(names: Vec<String>, cardinalities: Vec<usize>, grids: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != cardinalities.len() || names.len() != grids.len() {
            return Err(Error::InvalidConfig(format!(
                "factor descriptor lengths disagree: {} names, {} cardinalities, {} grids",
                names.len(),
                cardinalities.len(),
                grids.len()
            )));
        }
        if names.is_empty() {
            return Err(Error::InvalidConfig("factor space needs at least one factor".into()));
        }
        for ((name, &card), grid) in names.iter().zip(&cardinalities).zip(&grids) {
            if card == 0 {
                return Err(Error::InvalidConfig(format!("factor '{name}' has zero cardinality")));
            }
            if grid.len() != card {
                return Err(Error::InvalidConfig(format!(
                    "factor '{name}' grid has {} values for cardinality {card}",
                    grid.len()
                )));
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::InvalidConfig(format!(
                    "factor '{name}' grid is not strictly increasing"
                )));
            }
        }
        Ok(FactorSpace {
            names,
            cardinalities,
            grids,
        })
    }

    /// The five sprite factors with arbitrary cardinalities:
    /// shape (discrete), scale in [0.5, 1], orientation in [0, 2pi),
    /// and x/y position in [0, 1].
    pub fn dsprites_with(cardinalities: [usize; 5]) -> Result<Self> {
        let [n_shape, n_scale, n_orient, n_x, n_y] = cardinalities;
        if n_shape > 3 {
            return Err(Error::InvalidConfig(format!(
                "at most 3 sprite shapes are defined, got {n_shape}"
            )));
        }
        FactorSpace::new(
            vec![
                "shape".into(),
                "scale".into(),
                "orientation".into(),
                "pos_x".into(),
                "pos_y".into(),
            ],
            cardinalities.to_vec(),
            vec![
                (0..n_shape).map(|i| i as f64).collect(),
                linspace(0.5, 1.0, n_scale),
                // Half-open [0, 2pi) keeps the grid strictly monotone and
                // avoids a duplicate of the unrotated pose.
                (0..n_orient).map(|i| TAU * i as f64 / n_orient as f64).collect(),
                linspace(0.0, 1.0, n_x),
                linspace(0.0, 1.0, n_y),
            ],
        )
    }

    /// Canonical sprite grid: (3, 6, 40, 32, 32), 737,280 combinations.
    pub fn canonical_dsprites() -> Self {
        FactorSpace::dsprites_with([3, 6, 40, 32, 32]).unwrap()
    }

    /// Desk-scale sprite grid: (3, 6, 10, 16, 16), 46,080 combinations.
    pub fn reduced_dsprites() -> Self {
        FactorSpace::dsprites_with([3, 6, 10, 16, 16]).unwrap()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn cardinalities(&self) -> &[usize] {
        &self.cardinalities
    }

    pub fn grids(&self) -> &[Vec<f64>] {
        &self.grids
    }

    pub fn num_factors(&self) -> usize {
        self.names.len()
    }

    /// Total number of factor combinations.
    pub fn total(&self) -> usize {
        self.cardinalities.iter().product()
    }

    /// Row-major rank -> factor index vector.
    pub fn index_to_factors(&self, mut i: usize) -> Result<Vec<usize>> {
        if i >= self.total() {
            return Err(Error::InvalidInput(format!(
                "index {i} out of range for {} combinations",
                self.total()
            )));
        }
        let mut v = vec![0usize; self.num_factors()];
        for k in (0..self.num_factors()).rev() {
            v[k] = i % self.cardinalities[k];
            i /= self.cardinalities[k];
        }
        Ok(v)
    }

    /// Factor index vector -> row-major rank; inverse of
    /// [`FactorSpace::index_to_factors`].
    pub fn factors_to_index(&self, v: &[usize]) -> Result<usize> {
        if v.len() != self.num_factors() {
            return Err(Error::InvalidInput(format!(
                "expected {} factor indices, got {}",
                self.num_factors(),
                v.len()
            )));
        }
        let mut i = 0usize;
        for (k, (&vk, &card)) in v.iter().zip(&self.cardinalities).enumerate() {
            if vk >= card {
                return Err(Error::InvalidInput(format!(
                    "factor {k} index {vk} out of range (cardinality {card})"
                )));
            }
            i = i * card + vk;
        }
        Ok(i)
    }

    /// Grid values for a factor combination.
    pub fn values(&self, v: &[usize]) -> Result<Vec<f64>> {
        if v.len() != self.num_factors() {
            return Err(Error::InvalidInput(format!(
                "expected {} factor indices, got {}",
                self.num_factors(),
                v.len()
            )));
        }
        v.iter()
            .zip(&self.grids)
            .map(|(&vk, grid)| {
                grid.get(vk)
                    .copied()
                    .ok_or_else(|| Error::InvalidInput(format!("factor index {vk} out of range")))
            })
            .collect()
    }
}
