//! A small deterministic neural-network stack with hand-written backward
//! passes.
//!
//! Layers operate on dynamic-dimension `ndarray` tensors; image batches are
//! `[N, C, H, W]` and vector batches `[N, D]`. The stack is generic over the
//! scalar type: training runs in `f32` (which makes checkpoints and resumed
//! runs bit-exact), while gradient checks instantiate the same layers in
//! `f64`.
//!
//! Networks are single-writer: parameter updates must be externally
//! serialized, while cloned handles may run read-only forwards concurrently.

mod act;
mod adam;
mod checkpoint;
mod conv;
mod gradcheck;
mod layer;
mod linear;
mod network;
mod norm;
mod pool;
mod resblock;
mod resize;


pub use act::{LeakyRelu, Relu, Sigmoid, Tanh};
pub use adam::{Adam, AdamState};
pub use checkpoint::{load_named_tensors, save_named_tensors};
pub use conv::{Conv2d, ConvTranspose2d};
pub use gradcheck::finite_difference_check;
pub use layer::{Ctx, Layer};
pub use linear::{Flatten, Linear, Reshape};
pub use network::{Network, Tape};
pub use norm::BatchNorm2d;
pub use pool::{AvgPool2x2, UpsampleNearest2x};
pub use resblock::ResBlock;
pub use resize::{bilinear_resize, bilinear_resize_adjoint};

use ndarray::NdFloat;

/// Scalar element type for network tensors.
pub trait Scalar: NdFloat {
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
}
