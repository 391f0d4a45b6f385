use ndarray::{Array1, ArrayD};

use super::layer::{Ctx, Layer};
use super::Scalar;
use crate::{Error, Result};

/// A sequential stack of layers with flat-parameter access for optimization
/// and gradient checking.
#[derive(Clone)]
pub struct Network<T: Scalar> {
    layers: Vec<Box<dyn Layer<T>>>,
}

/// Per-layer forward caches from one [`Network::forward_train`] call.
pub struct Tape<T> {
    ctxs: Vec<Ctx<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Box<dyn Layer<T>>>) -> Self {
        Network { layers }
    }

    pub fn layers(&self) -> &[Box<dyn Layer<T>>] {
        &self.layers
    }

    /// Forward pass without retaining anything for backward.
    pub fn forward(&mut self, x: &ArrayD<T>, train: bool) -> Result<ArrayD<T>> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            let (y, _) = layer.forward(&h, train)?;
            h = y;
        }
        Ok(h)
    }

    /// Forward pass that retains per-layer caches for [`Network::backward`].
    pub fn forward_train(&mut self, x: &ArrayD<T>) -> Result<(ArrayD<T>, Tape<T>)> {
        let mut h = x.clone();
        let mut ctxs = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let (y, ctx) = layer.forward(&h, true)?;
            ctxs.push(ctx);
            h = y;
        }
        Ok((h, Tape { ctxs }))
    }

    /// Backpropagate an output gradient. Returns the input gradient and the
    /// flat parameter gradient aligned with [`Network::flat_params`].
    pub fn backward(&self, tape: &Tape<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Array1<T>) {
        let mut grads_rev: Vec<Vec<ArrayD<T>>> = Vec::with_capacity(self.layers.len());
        let mut dh = dy.clone();
        for (layer, ctx) in self.layers.iter().zip(&tape.ctxs).rev() {
            let (dx, g) = layer.backward(ctx, &dh);
            grads_rev.push(g);
            dh = dx;
        }
        grads_rev.reverse();
        let mut flat = Vec::with_capacity(self.param_count());
        for layer_grads in grads_rev {
            for g in layer_grads {
                flat.extend(g.iter().copied());
            }
        }
        (dh, Array1::from_vec(flat))
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params())
            .map(|(_, p)| p.len())
            .sum()
    }

    pub fn flat_params(&self) -> Array1<T> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            for (_, p) in layer.params() {
                flat.extend(p.iter().copied());
            }
        }
        Array1::from_vec(flat)
    }

    pub fn set_flat_params(&mut self, flat: &Array1<T>) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "flat parameter vector has {} entries, network has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            for (_, p) in layer.params_mut() {
                for v in p.iter_mut() {
                    *v = flat[offset];
                    offset += 1;
                }
            }
        }
        Ok(())
    }

    /// All persistent tensors as `(name, tensor)` pairs: parameters first,
    /// then buffers, with stable `NN.kind.name` naming.
    pub fn named_tensors(&self) -> Vec<(String, &ArrayD<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, p) in layer.params() {
                out.push((format!("{i:02}.{}.{name}", layer.kind()), p));
            }
        }
        for (i, layer) in self.layers.iter().enumerate() {
            for (name, b) in layer.buffers() {
                out.push((format!("{i:02}.{}.{name}", layer.kind()), b));
            }
        }
        out
    }

    /// Parameter tensors with stable names.
    pub fn named_params_mut(&mut self) -> Vec<(String, &mut ArrayD<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let kind = layer.kind();
            for (name, p) in layer.params_mut() {
                out.push((format!("{i:02}.{kind}.{name}"), p));
            }
        }
        out
    }

    /// Buffer tensors (running statistics) with stable names.
    pub fn named_buffers_mut(&mut self) -> Vec<(String, &mut ArrayD<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            let kind = layer.kind();
            for (name, b) in layer.buffers_mut() {
                out.push((format!("{i:02}.{kind}.{name}"), b));
            }
        }
        out
    }
}
