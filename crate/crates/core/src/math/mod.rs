//! Distribution arithmetic, likelihood terms, Frechet distance, and the
//! discrete-toy verifiers for the KL/JSD identities underlying the
//! distillation objective.
//!
//! Everything here is pure, reentrant, and works in nats.


mod discrete;
mod gaussian;
mod linalg;
mod stats;
mod verify;

pub use discrete::{discrete_jsd, discrete_kl, DiscreteJoint};
pub use gaussian::{bernoulli_reconstruction_nll, bernoulli_reconstruction_nll_grad, DiagonalGaussian};
pub use linalg::{sym_eig, sym_matrix_sqrt};
pub use stats::{frechet_distance, DistributionStats};
pub use verify::{
    verify_cgan_decomposition, verify_infogan_forward_kl, CganDecomposition, ToyCgan, ToyInfoGan,
};
