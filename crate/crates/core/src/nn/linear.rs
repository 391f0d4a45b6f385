use ndarray::{Array1, ArrayD, Axis, Ix2};
use rand_chacha::ChaCha8Rng;

use super::conv::fan_in_normal;
use super::layer::{Ctx, Layer};
use super::Scalar;
use crate::{Error, Result};

/// Fully connected layer: `y = x W^T + b` on `[N, in]` batches.
#[derive(Debug, Clone)]
pub struct Linear<T> {
    weight: ArrayD<T>, // [out, in]
    bias: ArrayD<T>,   // [out]
    pub in_dim: usize,
    pub out_dim: usize,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            weight: fan_in_normal(rng, &[out_dim, in_dim], in_dim),
            bias: ArrayD::zeros(vec![out_dim]),
            in_dim,
            out_dim,
        }
    }

    /// Zero-initialized variant (used by heads that must start at the prior).
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Linear {
            weight: ArrayD::zeros(vec![out_dim, in_dim]),
            bias: ArrayD::zeros(vec![out_dim]),
            in_dim,
            out_dim,
        }
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn kind(&self) -> &'static str {
        "fc"
    }

    fn forward(&mut self, x: &ArrayD<T>, _train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let x2 = x
            .view()
            .into_dimensionality::<Ix2>()
            .map_err(|_| Error::Shape(format!("fc expects [N,D], got {:?}", x.shape())))?;
        if x2.ncols() != self.in_dim {
            return Err(Error::Shape(format!(
                "fc expects width {}, got {}",
                self.in_dim,
                x2.ncols()
            )));
        }
        let w = self.weight.view().into_dimensionality::<Ix2>().unwrap();
        let mut y = x2.dot(&w.t());
        let b = self.bias.view().into_dimensionality::<ndarray::Ix1>().unwrap();
        y += &b;
        Ok((y.into_dyn(), Ctx::tensors(vec![x.clone()])))
    }

    fn backward(&self, ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let x2 = ctx.tensors[0].view().into_dimensionality::<Ix2>().unwrap();
        let dy2 = dy.view().into_dimensionality::<Ix2>().unwrap();
        let w = self.weight.view().into_dimensionality::<Ix2>().unwrap();
        let dw = dy2.t().dot(&x2);
        let db: Array1<T> = dy2.sum_axis(Axis(0));
        let dx = dy2.dot(&w);
        (dx.into_dyn(), vec![dw.into_dyn(), db.into_dyn()])
    }

    fn params(&self) -> Vec<(String, &ArrayD<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut ArrayD<T>)> {
        vec![("weight".into(), &mut self.weight), ("bias".into(), &mut self.bias)]
    }

    fn clone_box(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

/// `[N, C, H, W] -> [N, C*H*W]`.
#[derive(Debug, Clone, Default)]
pub struct Flatten;

impl<T: Scalar> Layer<T> for Flatten {
    fn kind(&self) -> &'static str {
        "flatten"
    }

    fn forward(&mut self, x: &ArrayD<T>, _train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let n = x.len_of(Axis(0));
        let rest = x.len() / n.max(1);
        let shape = ArrayD::<T>::zeros(x.shape().to_vec());
        let y = x
            .to_shape((n, rest))
            .map_err(|_| Error::Shape("flatten needs a contiguous input".into()))?
            .to_owned();
        Ok((y.into_dyn(), Ctx::tensors(vec![shape])))
    }

    fn backward(&self, ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let shape = ctx.tensors[0].shape().to_vec();
        let dx = dy.to_shape(shape).unwrap().to_owned();
        (dx, Vec::new())
    }

    fn clone_box(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

/// `[N, C*H*W] -> [N, C, H, W]`.
#[derive(Debug, Clone)]
pub struct Reshape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl<T: Scalar> Layer<T> for Reshape {
    fn kind(&self) -> &'static str {
        "reshape"
    }

    fn forward(&mut self, x: &ArrayD<T>, _train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let n = x.len_of(Axis(0));
        if x.len() != n * self.c * self.h * self.w {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into [N,{},{},{}]",
                x.shape(),
                self.c,
                self.h,
                self.w
            )));
        }
        let y = x.to_shape((n, self.c, self.h, self.w)).unwrap().to_owned();
        Ok((y.into_dyn(), Ctx::default()))
    }

    fn backward(&self, _ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let n = dy.len_of(Axis(0));
        let dx = dy.to_shape((n, self.c * self.h * self.w)).unwrap().to_owned();
        (dx.into_dyn(), Vec::new())
    }

    fn clone_box(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}
