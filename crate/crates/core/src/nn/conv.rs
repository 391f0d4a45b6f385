use ndarray::{Array1, Array2, Array3, ArrayD, ArrayView2, ArrayView3, Axis, Dimension, Ix1, Ix2, Ix4};
use rand_chacha::ChaCha8Rng;

use super::layer::{Ctx, Layer};
use super::Scalar;
use crate::{Error, Result};

/// Unfold `[C, H, W]` into a `[C*k*k, Ho*Wo]` patch matrix.
pub(crate) fn im2col<T: Scalar>(
    x: ArrayView3<'_, T>,
    k: usize,
    stride: usize,
    pad: usize,
) -> Array2<T> {
    let (c, h, w) = x.dim();
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut cols = Array2::zeros((c * k * k, ho * wo));
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                for oi in 0..ho {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..wo {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        cols[[row, oi * wo + oj]] = x[[ci, ii as usize, jj as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: fold a patch matrix back into `[C, H, W]`,
/// accumulating overlapping contributions.
pub(crate) fn col2im<T: Scalar>(
    cols: ArrayView2<'_, T>,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Array3<T> {
    let ho = (h + 2 * pad - k) / stride + 1;
    let wo = (w + 2 * pad - k) / stride + 1;
    let mut x = Array3::zeros((c, h, w));
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let row = (ci * k + ki) * k + kj;
                for oi in 0..ho {
                    let ii = (oi * stride + ki) as isize - pad as isize;
                    if ii < 0 || ii >= h as isize {
                        continue;
                    }
                    for oj in 0..wo {
                        let jj = (oj * stride + kj) as isize - pad as isize;
                        if jj < 0 || jj >= w as isize {
                            continue;
                        }
                        x[[ci, ii as usize, jj as usize]] =
                            x[[ci, ii as usize, jj as usize]] + cols[[row, oi * wo + oj]];
                    }
                }
            }
        }
    }
    x
}

pub(crate) fn fan_in_normal<T: Scalar>(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> ArrayD<T> {
    use rand_distr::{Distribution, StandardNormal};
    let std = 1.0 / (fan_in as f64).sqrt();
    ArrayD::from_shape_simple_fn(shape.to_vec(), || {
        let z: f64 = StandardNormal.sample(rng);
        T::from_f64(z * std)
    })
}

/// 2-D convolution with square kernel, stored as a `[O, I*k*k]` matrix for
/// patch-matrix multiplication.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    weight: ArrayD<T>, // [out_c, in_c*k*k]
    bias: ArrayD<T>,   // [out_c]
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = fan_in_normal(rng, &[out_c, in_c * k * k], in_c * k * k);
        Conv2d {
            weight,
            bias: ArrayD::zeros(vec![out_c]),
            in_c,
            out_c,
            k,
            stride,
            pad,
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h + 2 * self.pad - self.k) / self.stride + 1,
            (w + 2 * self.pad - self.k) / self.stride + 1,
        )
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn kind(&self) -> &'static str {
        "conv"
    }

    fn forward(&mut self, x: &ArrayD<T>, _train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let x4 = x
            .view()
            .into_dimensionality::<Ix4>()
            .map_err(|_| Error::Shape(format!("conv expects [N,C,H,W], got {:?}", x.shape())))?;
        let (n, c, h, w) = x4.dim();
        if c != self.in_c {
            return Err(Error::Shape(format!("conv expects {} input channels, got {c}", self.in_c)));
        }
        if h + 2 * self.pad < self.k || w + 2 * self.pad < self.k {
            return Err(Error::Shape(format!("input {h}x{w} too small for kernel {}", self.k)));
        }
        let (ho, wo) = self.out_hw(h, w);
        let w2 = self.weight.view().into_dimensionality::<Ix2>().unwrap();
        let b = self.bias.view().into_dimensionality::<Ix1>().unwrap();
        let mut y = ArrayD::zeros(vec![n, self.out_c, ho, wo]);
        let mut y4 = y.view_mut().into_dimensionality::<Ix4>().unwrap();
        for ni in 0..n {
            let cols = im2col(x4.index_axis(Axis(0), ni), self.k, self.stride, self.pad);
            let out = w2.dot(&cols); // [O, Ho*Wo]
            let mut target = y4.index_axis_mut(Axis(0), ni);
            for oc in 0..self.out_c {
                let bias = b[oc];
                for oi in 0..ho {
                    for oj in 0..wo {
                        target[[oc, oi, oj]] = out[[oc, oi * wo + oj]] + bias;
                    }
                }
            }
        }
        Ok((y, Ctx::tensors(vec![x.clone()])))
    }

    fn backward(&self, ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let x4 = ctx.tensors[0].view().into_dimensionality::<Ix4>().unwrap();
        let dy4 = dy.view().into_dimensionality::<Ix4>().unwrap();
        let (n, _, h, w) = x4.dim();
        let (_, _, ho, wo) = dy4.dim();
        let w2 = self.weight.view().into_dimensionality::<Ix2>().unwrap();

        let mut dw = Array2::<T>::zeros((self.out_c, self.in_c * self.k * self.k));
        let mut db = Array1::<T>::zeros(self.out_c);
        let mut dx = ArrayD::zeros(x4.raw_dim().into_dyn());
        let mut dx4 = dx.view_mut().into_dimensionality::<Ix4>().unwrap();

        for ni in 0..n {
            let cols = im2col(x4.index_axis(Axis(0), ni), self.k, self.stride, self.pad);
            let dyn_ = dy4.index_axis(Axis(0), ni);
            let dy_flat = dyn_.to_shape((self.out_c, ho * wo)).unwrap();
            dw = dw + dy_flat.dot(&cols.t());
            db = db + dy_flat.sum_axis(Axis(1));
            let dcols = w2.t().dot(&dy_flat);
            let dxi = col2im(dcols.view(), self.in_c, h, w, self.k, self.stride, self.pad);
            dx4.index_axis_mut(Axis(0), ni).assign(&dxi);
        }
        (dx, vec![dw.into_dyn(), db.into_dyn()])
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

/// Transposed 2-D convolution (the adjoint of [`Conv2d`] with the same
/// geometry); upsamples by `stride`.
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<T> {
    weight: ArrayD<T>, // [in_c, out_c*k*k]
    bias: ArrayD<T>,   // [out_c]
    pub in_c: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new(in_c: usize, out_c: usize, k: usize, stride: usize, pad: usize, rng: &mut ChaCha8Rng) -> Self {
        let weight = fan_in_normal(rng, &[in_c, out_c * k * k], in_c * k * k);
        ConvTranspose2d {
            weight,
            bias: ArrayD::zeros(vec![out_c]),
            in_c,
            out_c,
            k,
            stride,
            pad,
        }
    }

    fn out_hw(&self, h: usize, w: usize) -> (usize, usize) {
        (
            (h - 1) * self.stride + self.k - 2 * self.pad,
            (w - 1) * self.stride + self.k - 2 * self.pad,
        )
    }
}

impl<T: Scalar> Layer<T> for ConvTranspose2d<T> {
    fn kind(&self) -> &'static str {
        "upconv"
    }

    fn forward(&mut self, x: &ArrayD<T>, _train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let x4 = x
            .view()
            .into_dimensionality::<Ix4>()
            .map_err(|_| Error::Shape(format!("upconv expects [N,C,H,W], got {:?}", x.shape())))?;
        let (n, c, h, w) = x4.dim();
        if c != self.in_c {
            return Err(Error::Shape(format!("upconv expects {} input channels, got {c}", self.in_c)));
        }
        let (ho, wo) = self.out_hw(h, w);
        let w2 = self.weight.view().into_dimensionality::<Ix2>().unwrap();
        let b = self.bias.view().into_dimensionality::<Ix1>().unwrap();
        let mut y = ArrayD::zeros(vec![n, self.out_c, ho, wo]);
        let mut y4 = y.view_mut().into_dimensionality::<Ix4>().unwrap();
        for ni in 0..n {
            let xi = x4.index_axis(Axis(0), ni);
            let x_flat = xi.to_shape((self.in_c, h * w)).unwrap();
            let cols = w2.t().dot(&x_flat); // [O*k*k, H*W]
            let out = col2im(cols.view(), self.out_c, ho, wo, self.k, self.stride, self.pad);
            let mut target = y4.index_axis_mut(Axis(0), ni);
            target.assign(&out);
            for oc in 0..self.out_c {
                let bias = b[oc];
                target.index_axis_mut(Axis(0), oc).mapv_inplace(|v| v + bias);
            }
        }
        Ok((y, Ctx::tensors(vec![x.clone()])))
    }

    fn backward(&self, ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let x4 = ctx.tensors[0].view().into_dimensionality::<Ix4>().unwrap();
        let dy4 = dy.view().into_dimensionality::<Ix4>().unwrap();
        let (n, _, h, w) = x4.dim();
        let w2 = self.weight.view().into_dimensionality::<Ix2>().unwrap();

        let mut dw = Array2::<T>::zeros((self.in_c, self.out_c * self.k * self.k));
        let mut db = Array1::<T>::zeros(self.out_c);
        let mut dx = ArrayD::zeros(x4.raw_dim().into_dyn());
        let mut dx4 = dx.view_mut().into_dimensionality::<Ix4>().unwrap();

        for ni in 0..n {
            let dyi = dy4.index_axis(Axis(0), ni);
            // The forward is y = col2im(W^T x); its adjoint in x is
            // W im2col(dy), and the weight gradient pairs x with im2col(dy).
            let dy_cols = im2col(dyi, self.k, self.stride, self.pad); // [O*k*k, H*W]
            let xi = x4.index_axis(Axis(0), ni);
            let x_flat = xi.to_shape((self.in_c, h * w)).unwrap();
            dw = dw + x_flat.dot(&dy_cols.t());
            let dxi = w2.dot(&dy_cols); // [I, H*W]
            dx4.index_axis_mut(Axis(0), ni)
                .assign(&dxi.to_shape((self.in_c, h, w)).unwrap());
            for oc in 0..self.out_c {
                db[oc] = db[oc] + dyi.index_axis(Axis(0), oc).sum();
            }
        }
        (dx, vec![dw.into_dyn(), db.into_dyn()])
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
