use ndarray::{Array1, ArrayD, ArrayViewD, Axis};

use crate::{Error, Result};

/// A diagonal Gaussian given by per-dimension mean and log-variance.
///
/// This is the parameterization produced by the stage-1 encoder head for
/// `q(c|x)` and used for the prior `p(c) = N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGaussian {
    mean: Array1<f64>,
    log_variance: Array1<f64>,
}

impl DiagonalGaussian {
    pub fn new(mean: Array1<f64>, log_variance: Array1<f64>) -> Result<Self> {
        if mean.is_empty() {
            return Err(Error::InvalidInput("gaussian must have dimension >= 1".into()));
        }
        if mean.len() != log_variance.len() {
            return Err(Error::InvalidInput(format!(
                "mean has {} dims but log_variance has {}",
                mean.len(),
                log_variance.len()
            )));
        }
        if mean.iter().chain(log_variance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite entry in gaussian parameters".into()));
        }
        Ok(Self { mean, log_variance })
    }

    /// The standard normal `N(0, I)` in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            log_variance: Array1::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn log_variance(&self) -> &Array1<f64> {
        &self.log_variance
    }

    /// `KL(q || N(0, I)) = 1/2 * sum_j (mu_j^2 + sigma_j^2 - 1 - log sigma_j^2)`.
    pub fn kl_to_standard(&self) -> f64 {
        self.mean
            .iter()
            .zip(self.log_variance.iter())
            .map(|(&mu, &lv)| 0.5 * (mu * mu + lv.exp() - 1.0 - lv))
            .sum()
    }

    /// Reparameterized sample `mean + exp(log_variance / 2) * noise`.
    pub fn reparameterize(&self, noise: &Array1<f64>) -> Result<Array1<f64>> {
        if noise.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "noise has {} dims, gaussian has {}",
                noise.len(),
                self.dim()
            )));
        }
        Ok(&self.mean + &(self.log_variance.mapv(|lv| (0.5 * lv).exp()) * noise))
    }

    /// Log-density of `c` under this Gaussian, in nats.
    pub fn log_density(&self, c: &Array1<f64>) -> Result<f64> {
        if c.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "point has {} dims, gaussian has {}",
                c.len(),
                self.dim()
            )));
        }
        const LOG_2PI: f64 = 1.8378770664093453; // ln(2*pi)
        Ok(c
            .iter()
            .zip(self.mean.iter())
            .zip(self.log_variance.iter())
            .map(|((&cj, &mu), &lv)| {
                let d = cj - mu;
                -0.5 * (LOG_2PI + lv) - d * d / (2.0 * lv.exp())
            })
            .sum())
    }
}

/// Mean-over-batch of the summed per-pixel binary cross-entropy between
/// targets `x` in `[0, 1]` and decoder `logits` of the same shape.
///
/// Axis 0 is the batch axis. Computed in the numerically stable
/// `softplus(logit) - x * logit` form.
pub fn bernoulli_reconstruction_nll(x: ArrayViewD<'_, f64>, logits: ArrayViewD<'_, f64>) -> Result<f64> {
    Ok(bernoulli_reconstruction_nll_grad(x, logits)?.0)
}

/// Same as [`bernoulli_reconstruction_nll`] but also returns the gradient of
/// the loss with respect to the logits.
pub fn bernoulli_reconstruction_nll_grad(
    x: ArrayViewD<'_, f64>,
    logits: ArrayViewD<'_, f64>,
) -> Result<(f64, ArrayD<f64>)> {
    if x.shape() != logits.shape() {
        return Err(Error::InvalidInput(format!(
            "targets shape {:?} != logits shape {:?}",
            x.shape(),
            logits.shape()
        )));
    }
    if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::InvalidInput("reconstruction targets must lie in [0, 1]".into()));
    }
    let batch = x.len_of(Axis(0)) as f64;
    let mut loss = 0.0;
    let mut grad = ArrayD::zeros(logits.raw_dim());
    for ((g, &t), &l) in grad.iter_mut().zip(x.iter()).zip(logits.iter()) {
        // softplus(l) - t*l, with the large-|l| branch kept exact.
        let sp = if l > 0.0 { l + (-l).exp().ln_1p() } else { l.exp().ln_1p() };
        loss += sp - t * l;
        let sigma = 1.0 / (1.0 + (-l).exp());
        *g = (sigma - t) / batch;
    }
    Ok((loss / batch, grad))
}
