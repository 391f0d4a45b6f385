//! Core library for two-stage disentangled generative modeling.
//!
//! The pipeline has two stages: stage 1 learns a disentangled latent code `c`
//! with a VAE-family model (plain VAE, beta-VAE, or FactorVAE); stage 2 trains
//! a GAN generator on the latent `z = (s, c)` while an information-distillation
//! term forces the frozen stage-1 encoder to recover `c` from the generator
//! output. Everything needed to train, evaluate, and compare the variants lives
//! here:
//!
//! - [`math`] — distribution arithmetic, Frechet distance, discrete KL/JSD,
//!   and numerical verifiers for the KL-divergence identities behind the method.
//! - [`data`] — procedural sprite datasets with ground-truth factors, dataset
//!   persistence, and image-folder ingestion.
//! - [`nn`] — a small deterministic neural-network stack (conv, upconv, fully
//!   connected, resnet blocks) with hand-written backward passes.
//! - [`nets`] — the concrete encoder/decoder/generator/discriminator
//!   architectures used by every experiment.
//! - [`train`] — stage-1 and stage-2 training loops for all modes and
//!   ablation baselines.
//! - [`metrics`] — FVM, MIG, FID, distillation-alignment (R_ID), and GILBO.

pub mod data;
pub mod math;
pub mod metrics;
pub mod nets;
pub mod nn;
pub mod train;

mod error;

pub use error::{Error, Result};
