use ndarray::{ArrayD, Axis, Ix4};

use super::layer::{Ctx, Layer};
use super::Scalar;
use crate::{Error, Result};

/// Per-channel batch normalization over `[N, C, H, W]`.
///
/// Training uses batch statistics and updates running estimates; evaluation
/// uses the running estimates. Backward assumes the layer ran in training
/// mode (the only mode gradients are taken in).
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    gamma: ArrayD<T>,
    beta: ArrayD<T>,
    running_mean: ArrayD<T>,
    running_var: ArrayD<T>,
    pub channels: usize,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: ArrayD::ones(vec![channels]),
            beta: ArrayD::zeros(vec![channels]),
            running_mean: ArrayD::zeros(vec![channels]),
            running_var: ArrayD::ones(vec![channels]),
            channels,
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

impl<T: Scalar> Layer<T> for BatchNorm2d<T> {
    fn kind(&self) -> &'static str {
        "batch_norm"
    }

    fn forward(&mut self, x: &ArrayD<T>, train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let x4 = x
            .view()
            .into_dimensionality::<Ix4>()
            .map_err(|_| Error::Shape(format!("batch_norm expects [N,C,H,W], got {:?}", x.shape())))?;
        let (n, c, h, w) = x4.dim();
        if c != self.channels {
            return Err(Error::Shape(format!("batch_norm expects {} channels, got {c}", self.channels)));
        }
        let m = T::from_f64((n * h * w) as f64);
        let eps = T::from_f64(self.eps);

        let mut y = ArrayD::zeros(x.raw_dim());
        let mut xhat = ArrayD::zeros(x.raw_dim());
        let mut invstd = ArrayD::<T>::zeros(vec![c]);
        {
            let mut y4 = y.view_mut().into_dimensionality::<Ix4>().unwrap();
            let mut xhat4 = xhat.view_mut().into_dimensionality::<Ix4>().unwrap();
            for ci in 0..c {
                let slice = x4.index_axis(Axis(1), ci);
                let (mean, var) = if train {
                    let mean = slice.sum() / m;
                    let var = slice.mapv(|v| (v - mean) * (v - mean)).sum() / m;
                    let mom = T::from_f64(self.momentum);
                    self.running_mean[ci] = self.running_mean[ci] * (T::one() - mom) + mean * mom;
                    self.running_var[ci] = self.running_var[ci] * (T::one() - mom) + var * mom;
                    (mean, var)
                } else {
                    (self.running_mean[ci], self.running_var[ci])
                };
                let istd = T::one() / (var + eps).sqrt();
                invstd[ci] = istd;
                let g = self.gamma[ci];
                let b = self.beta[ci];
                for ni in 0..n {
                    for i in 0..h {
                        for j in 0..w {
                            let xh = (x4[[ni, ci, i, j]] - mean) * istd;
                            xhat4[[ni, ci, i, j]] = xh;
                            y4[[ni, ci, i, j]] = g * xh + b;
                        }
                    }
                }
            }
        }
        Ok((y, Ctx::tensors(vec![xhat, invstd])))
    }

    fn backward(&self, ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let xhat = ctx.tensors[0].view().into_dimensionality::<Ix4>().unwrap();
        let invstd = &ctx.tensors[1];
        let dy4 = dy.view().into_dimensionality::<Ix4>().unwrap();
        let (n, c, h, w) = dy4.dim();
        let m = T::from_f64((n * h * w) as f64);

        let mut dgamma = ArrayD::<T>::zeros(vec![c]);
        let mut dbeta = ArrayD::<T>::zeros(vec![c]);
        let mut dx = ArrayD::zeros(dy.raw_dim());
        let mut dx4 = dx.view_mut().into_dimensionality::<Ix4>().unwrap();

        for ci in 0..c {
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for ni in 0..n {
                for i in 0..h {
                    for j in 0..w {
                        let g = dy4[[ni, ci, i, j]];
                        sum_dy = sum_dy + g;
                        sum_dy_xhat = sum_dy_xhat + g * xhat[[ni, ci, i, j]];
                    }
                }
            }
            dbeta[ci] = sum_dy;
            dgamma[ci] = sum_dy_xhat;
            let scale = self.gamma[ci] * invstd[ci] / m;
            for ni in 0..n {
                for i in 0..h {
                    for j in 0..w {
                        let g = dy4[[ni, ci, i, j]];
                        dx4[[ni, ci, i, j]] =
                            scale * (g * m - sum_dy - xhat[[ni, ci, i, j]] * sum_dy_xhat);
                    }
                }
            }
        }
        (dx, vec![dgamma, dbeta])
    }

    fn params(&self) -> Vec<(String, &ArrayD<T>)> {
        vec![("gamma".into(), &self.gamma), ("beta".into(), &self.beta)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut ArrayD<T>)> {
        vec![("gamma".into(), &mut self.gamma), ("beta".into(), &mut self.beta)]
    }

    fn buffers(&self) -> Vec<(String, &ArrayD<T>)> {
        vec![
            ("running_mean".into(), &self.running_mean),
            ("running_var".into(), &self.running_var),
        ]
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut ArrayD<T>)> {
        vec![
            ("running_mean".into(), &mut self.running_mean),
            ("running_var".into(), &mut self.running_var),
        ]
    }

    fn clone_box(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}
