use ndarray::ArrayD;

use super::layer::{Ctx, Layer};
use super::Scalar;
use crate::Result;

#[derive(Debug, Clone, Default)]
pub struct Relu;

impl<T: Scalar> Layer<T> for Relu {
    fn kind(&self) -> &'static str {
        "relu"
    }

    fn forward(&mut self, x: &ArrayD<T>, _train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let y = x.mapv(|v| if v > T::zero() { v } else { T::zero() });
        Ok((y, Ctx::tensors(vec![x.clone()])))
    }

    fn backward(&self, ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let x = &ctx.tensors[0];
        let mut dx = dy.clone();
        dx.zip_mut_with(x, |g, &v| {
            if v <= T::zero() {
                *g = T::zero();
            }
        });
        (dx, Vec::new())
    }

    fn clone_box(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone)]
pub struct LeakyRelu {
    pub slope: f64,
}

impl LeakyRelu {
    pub fn new(slope: f64) -> Self {
        LeakyRelu { slope }
    }
}

impl<T: Scalar> Layer<T> for LeakyRelu {
    fn kind(&self) -> &'static str {
        "leaky_relu"
    }

    fn forward(&mut self, x: &ArrayD<T>, _train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let a = T::from_f64(self.slope);
        let y = x.mapv(|v| if v > T::zero() { v } else { v * a });
        Ok((y, Ctx::tensors(vec![x.clone()])))
    }

    fn backward(&self, ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let a = T::from_f64(self.slope);
        let x = &ctx.tensors[0];
        let mut dx = dy.clone();
        dx.zip_mut_with(x, |g, &v| {
            if v <= T::zero() {
                *g = *g * a;
            }
        });
        (dx, Vec::new())
    }

    fn clone_box(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sigmoid;

impl<T: Scalar> Layer<T> for Sigmoid {
    fn kind(&self) -> &'static str {
        "sigmoid"
    }

    fn forward(&mut self, x: &ArrayD<T>, _train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let y = x.mapv(|v| T::one() / (T::one() + (-v).exp()));
        Ok((y.clone(), Ctx::tensors(vec![y])))
    }

    fn backward(&self, ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let y = &ctx.tensors[0];
        let mut dx = dy.clone();
        dx.zip_mut_with(y, |g, &v| *g = *g * v * (T::one() - v));
        (dx, Vec::new())
    }

    fn clone_box(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Tanh;

impl<T: Scalar> Layer<T> for Tanh {
    fn kind(&self) -> &'static str {
        "tanh"
    }

    fn forward(&mut self, x: &ArrayD<T>, _train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let y = x.mapv(|v| v.tanh());
        Ok((y.clone(), Ctx::tensors(vec![y])))
    }

    fn backward(&self, ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let y = &ctx.tensors[0];
        let mut dx = dy.clone();
        dx.zip_mut_with(y, |g, &v| *g = *g * (T::one() - v * v));
        (dx, Vec::new())
    }

    fn clone_box(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}
