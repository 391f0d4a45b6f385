use ndarray::{ArrayD, Ix4};

use super::layer::{Ctx, Layer};
use super::Scalar;
use crate::{Error, Result};

/// 2x2 average pooling with stride 2.
#[derive(Debug, Clone, Default)]
pub struct AvgPool2x2;

impl<T: Scalar> Layer<T> for AvgPool2x2 {
    fn kind(&self) -> &'static str {
        "avg_pool"
    }

    fn forward(&mut self, x: &ArrayD<T>, _train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let x4 = x
            .view()
            .into_dimensionality::<Ix4>()
            .map_err(|_| Error::Shape(format!("avg_pool expects [N,C,H,W], got {:?}", x.shape())))?;
        let (n, c, h, w) = x4.dim();
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Shape(format!("avg_pool needs even spatial dims, got {h}x{w}")));
        }
        let quarter = T::from_f64(0.25);
        let mut y = ArrayD::zeros(vec![n, c, h / 2, w / 2]);
        let mut y4 = y.view_mut().into_dimensionality::<Ix4>().unwrap();
        for ni in 0..n {
            for ci in 0..c {
                for i in 0..h / 2 {
                    for j in 0..w / 2 {
                        let s = x4[[ni, ci, 2 * i, 2 * j]]
                            + x4[[ni, ci, 2 * i + 1, 2 * j]]
                            + x4[[ni, ci, 2 * i, 2 * j + 1]]
                            + x4[[ni, ci, 2 * i + 1, 2 * j + 1]];
                        y4[[ni, ci, i, j]] = s * quarter;
                    }
                }
            }
        }
        Ok((y, Ctx::default()))
    }

    fn backward(&self, _ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let dy4 = dy.view().into_dimensionality::<Ix4>().unwrap();
        let (n, c, ho, wo) = dy4.dim();
        let quarter = T::from_f64(0.25);
        let mut dx = ArrayD::zeros(vec![n, c, ho * 2, wo * 2]);
        let mut dx4 = dx.view_mut().into_dimensionality::<Ix4>().unwrap();
        for ni in 0..n {
            for ci in 0..c {
                for i in 0..ho {
                    for j in 0..wo {
                        let g = dy4[[ni, ci, i, j]] * quarter;
                        dx4[[ni, ci, 2 * i, 2 * j]] = g;
                        dx4[[ni, ci, 2 * i + 1, 2 * j]] = g;
                        dx4[[ni, ci, 2 * i, 2 * j + 1]] = g;
                        dx4[[ni, ci, 2 * i + 1, 2 * j + 1]] = g;
                    }
                }
            }
        }
        (dx, Vec::new())
    }

    fn clone_box(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

/// Nearest-neighbor 2x upsampling.
#[derive(Debug, Clone, Default)]
pub struct UpsampleNearest2x;

impl<T: Scalar> Layer<T> for UpsampleNearest2x {
    fn kind(&self) -> &'static str {
        "upsample_nn"
    }

    fn forward(&mut self, x: &ArrayD<T>, _train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let x4 = x
            .view()
            .into_dimensionality::<Ix4>()
            .map_err(|_| Error::Shape(format!("upsample expects [N,C,H,W], got {:?}", x.shape())))?;
        let (n, c, h, w) = x4.dim();
        let mut y = ArrayD::zeros(vec![n, c, h * 2, w * 2]);
        let mut y4 = y.view_mut().into_dimensionality::<Ix4>().unwrap();
        for ni in 0..n {
            for ci in 0..c {
                for i in 0..h {
                    for j in 0..w {
                        let v = x4[[ni, ci, i, j]];
                        y4[[ni, ci, 2 * i, 2 * j]] = v;
                        y4[[ni, ci, 2 * i + 1, 2 * j]] = v;
                        y4[[ni, ci, 2 * i, 2 * j + 1]] = v;
                        y4[[ni, ci, 2 * i + 1, 2 * j + 1]] = v;
                    }
                }
            }
        }
        Ok((y, Ctx::default()))
    }

    fn backward(&self, _ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let dy4 = dy.view().into_dimensionality::<Ix4>().unwrap();
        let (n, c, ho, wo) = dy4.dim();
        let mut dx = ArrayD::zeros(vec![n, c, ho / 2, wo / 2]);
        let mut dx4 = dx.view_mut().into_dimensionality::<Ix4>().unwrap();
        for ni in 0..n {
            for ci in 0..c {
                for i in 0..ho / 2 {
                    for j in 0..wo / 2 {
                        dx4[[ni, ci, i, j]] = dy4[[ni, ci, 2 * i, 2 * j]]
                            + dy4[[ni, ci, 2 * i + 1, 2 * j]]
                            + dy4[[ni, ci, 2 * i, 2 * j + 1]]
                            + dy4[[ni, ci, 2 * i + 1, 2 * j + 1]];
                    }
                }
            }
        }
        (dx, Vec::new())
    }

    fn clone_box(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}
