use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::linalg::{sym_eig, sym_matrix_sqrt};
use crate::{Error, Result};

/// Gaussian summary statistics of a feature batch: mean vector, covariance
/// matrix, and the number of samples they were fitted from.
#[derive(Debug, Clone)]
pub struct DistributionStats {
    mean: Array1<f64>,
    covariance: Array2<f64>,
    sample_count: usize,
}

impl DistributionStats {
    /// Validates symmetry (within 1e-8) and near-PSD-ness (eigenvalues >= -1e-8
    /// relative to the spectral scale).
    pub fn new(mean: Array1<f64>, covariance: Array2<f64>, sample_count: usize) -> Result<Self> {
        let d = mean.len();
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::InvalidInput(format!(
                "covariance is {}x{}, mean has {} dims",
                covariance.nrows(),
                covariance.ncols(),
                d
            )));
        }
        if sample_count == 0 {
            return Err(Error::InvalidInput("sample_count must be positive".into()));
        }
        let scale = covariance.iter().fold(1.0f64, |a, x| a.max(x.abs()));
        for i in 0..d {
            for j in 0..d {
                if (covariance[[i, j]] - covariance[[j, i]]).abs() > 1e-8 * scale.max(1.0) {
                    return Err(Error::InvalidInput("covariance is not symmetric".into()));
                }
            }
        }
        let (w, _) = sym_eig(&covariance);
        if w.iter().any(|&x| x < -1e-8 * scale.max(1.0)) {
            return Err(Error::InvalidInput("covariance is not positive semi-definite".into()));
        }
        Ok(Self {
            mean,
            covariance,
            sample_count,
        })
    }

    /// Fit mean and (population) covariance from a `[n, d]` sample matrix.
    pub fn from_samples(samples: ArrayView2<'_, f64>) -> Result<Self> {
        let n = samples.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("cannot fit statistics from zero samples".into()));
        }
        let mean = samples.mean_axis(Axis(0)).expect("n > 0");
        let centered = &samples - &mean;
        let covariance = centered.t().dot(&centered) / n as f64;
        Self::new(mean, covariance, n)
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &Array2<f64> {
        &self.covariance
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Frechet distance between two Gaussians:
/// `||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^{1/2})`.
///
/// The cross term is evaluated through the symmetrized product
/// `sqrt(S_a) S_b sqrt(S_a)`, whose eigenvalues are clamped at a -1e-6
/// tolerance; the final value is clamped to be nonnegative.
pub fn frechet_distance(a: &DistributionStats, b: &DistributionStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::InvalidInput(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    if a.mean == b.mean && a.covariance == b.covariance {
        return Ok(0.0);
    }
    let diff = a.mean() - b.mean();
    let mean_term = diff.dot(&diff);

    let sqrt_a = sym_matrix_sqrt(a.covariance());
    let prod = sqrt_a.dot(b.covariance()).dot(&sqrt_a);
    let sym = (&prod + &prod.t()) * 0.5;
    let (w, _) = sym_eig(&sym);
    let scale = w.iter().fold(1.0f64, |acc, x| acc.max(x.abs()));
    if w.iter().any(|&x| x < -1e-6 * scale) {
        return Err(Error::InvalidInput(
            "covariance product has negative eigenvalues beyond tolerance".into(),
        ));
    }
    let tr_sqrt: f64 = w.iter().map(|&x| x.max(0.0).sqrt()).sum();

    let trace_a: f64 = a.covariance().diag().sum();
    let trace_b: f64 = b.covariance().diag().sum();
    let value = mean_term + trace_a + trace_b - 2.0 * tr_sqrt;
    Ok(value.max(0.0))
}
