use ndarray::ArrayD;
use rand_chacha::ChaCha8Rng;

use super::conv::Conv2d;
use super::layer::{Ctx, Layer};
use super::norm::BatchNorm2d;
use super::Scalar;
use crate::Result;

/// Residual block: `y = branch(x) + skip(x)` where the branch is
/// `[bn] -> relu -> conv3x3 -> [bn] -> relu -> conv3x3` and the skip is a
/// 1x1 convolution when channel counts differ, identity otherwise.
/// Resampling (upsample/pool) is a separate layer in the enclosing network.
#[derive(Clone)]
pub struct ResBlock<T: Scalar> {
    branch: Vec<Box<dyn Layer<T>>>,
    skip: Option<Conv2d<T>>,
    pub in_c: usize,
    pub out_c: usize,
}

impl<T: Scalar> ResBlock<T> {
    pub fn new(in_c: usize, out_c: usize, with_norm: bool, rng: &mut ChaCha8Rng) -> Self {
        let mut branch: Vec<Box<dyn Layer<T>>> = Vec::new();
        if with_norm {
            branch.push(Box::new(BatchNorm2d::new(in_c)));
        }
        branch.push(Box::new(super::act::Relu));
        branch.push(Box::new(Conv2d::new(in_c, out_c, 3, 1, 1, rng)));
        if with_norm {
            branch.push(Box::new(BatchNorm2d::new(out_c)));
        }
        branch.push(Box::new(super::act::Relu));
        branch.push(Box::new(Conv2d::new(out_c, out_c, 3, 1, 1, rng)));
        let skip = if in_c != out_c {
            Some(Conv2d::new(in_c, out_c, 1, 1, 0, rng))
        } else {
            None
        };
        ResBlock {
            branch,
            skip,
            in_c,
            out_c,
        }
    }
}

impl<T: Scalar> Layer<T> for ResBlock<T> {
    fn kind(&self) -> &'static str {
        "resblock"
    }

    fn forward(&mut self, x: &ArrayD<T>, train: bool) -> Result<(ArrayD<T>, Ctx<T>)> {
        let mut children = Vec::with_capacity(self.branch.len() + 1);
        let mut h = x.clone();
        for layer in &mut self.branch {
            let (y, ctx) = layer.forward(&h, train)?;
            children.push(ctx);
            h = y;
        }
        let skip_out = match &mut self.skip {
            Some(conv) => {
                let (y, ctx) = conv.forward(x, train)?;
                children.push(ctx);
                y
            }
            None => x.clone(),
        };
        let y = &h + &skip_out;
        Ok((
            y,
            Ctx {
                tensors: Vec::new(),
                children,
            },
        ))
    }

    fn backward(&self, ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>) {
        let n_branch = self.branch.len();
        let mut grads_per_layer: Vec<Vec<ArrayD<T>>> = Vec::with_capacity(n_branch + 1);
        let mut dh = dy.clone();
        for (layer, child) in self.branch.iter().zip(&ctx.children[..n_branch]).rev() {
            let (dx, g) = layer.backward(child, &dh);
            grads_per_layer.push(g);
            dh = dx;
        }
        grads_per_layer.reverse();

        let dskip = match &self.skip {
            Some(conv) => {
                let (dx, g) = conv.backward(&ctx.children[n_branch], dy);
                grads_per_layer.push(g);
                dx
            }
            None => dy.clone(),
        };

        let dx = &dh + &dskip;
        (dx, grads_per_layer.into_iter().flatten().collect())
    }

    fn params(&self) -> Vec<(String, &ArrayD<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.branch.iter().enumerate() {
            for (name, p) in layer.params() {
                out.push((format!("branch{i}.{name}"), p));
            }
        }
        if let Some(conv) = &self.skip {
            for (name, p) in Layer::<T>::params(conv) {
                out.push((format!("skip.{name}"), p));
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut ArrayD<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.branch.iter_mut().enumerate() {
            for (name, p) in layer.params_mut() {
                out.push((format!("branch{i}.{name}"), p));
            }
        }
        if let Some(conv) = &mut self.skip {
            for (name, p) in Layer::<T>::params_mut(conv) {
                out.push((format!("skip.{name}"), p));
            }
        }
        out
    }

    fn buffers(&self) -> Vec<(String, &ArrayD<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.branch.iter().enumerate() {
            for (name, p) in layer.buffers() {
                out.push((format!("branch{i}.{name}"), p));
            }
        }
        out
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut ArrayD<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.branch.iter_mut().enumerate() {
            for (name, p) in layer.buffers_mut() {
                out.push((format!("branch{i}.{name}"), p));
            }
        }
        out
    }

    fn clone_box(&self) -> Box<dyn Layer<T>> {
        Box::new(self.clone())
    }
}
