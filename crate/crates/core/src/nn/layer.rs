use ndarray::ArrayD;

use super::Scalar;
use crate::Result;

/// Values a layer saves during the forward pass for use in backward.
#[derive(Debug, Clone)]
pub struct Ctx<T> {
    pub tensors: Vec<ArrayD<T>>,
    pub children: Vec<Ctx<T>>,
}

impl<T> Default for Ctx<T> {
    fn default() -> Self {
        Ctx {
            tensors: Vec::new(),
            children: Vec::new(),
        }
    }
}

impl<T> Ctx<T> {
    pub fn tensors(tensors: Vec<ArrayD<T>>) -> Self {
        Ctx {
            tensors,
            children: Vec::new(),
        }
    }
}

/// A differentiable layer with explicit forward/backward.
///
/// `forward` takes `&mut self` because normalization layers update running
/// statistics when `train` is set; every other layer is read-only.
pub trait Layer<T: Scalar>: Send {
    fn kind(&self) -> &'static str;

    fn forward(&mut self, x: &ArrayD<T>, train: bool) -> Result<(ArrayD<T>, Ctx<T>)>;

    /// Returns the gradient with respect to the input and, in declaration
    /// order, with respect to each parameter returned by [`Layer::params`].
    fn backward(&self, ctx: &Ctx<T>, dy: &ArrayD<T>) -> (ArrayD<T>, Vec<ArrayD<T>>);

    /// Learnable parameters as `(name, tensor)` pairs.
    fn params(&self) -> Vec<(String, &ArrayD<T>)> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut ArrayD<T>)> {
        Vec::new()
    }

    /// Non-learnable persistent state (e.g. running statistics).
    fn buffers(&self) -> Vec<(String, &ArrayD<T>)> {
        Vec::new()
    }

    fn buffers_mut(&mut self) -> Vec<(String, &mut ArrayD<T>)> {
        Vec::new()
    }

    fn clone_box(&self) -> Box<dyn Layer<T>>;
}

impl<T: Scalar> Clone for Box<dyn Layer<T>> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}
