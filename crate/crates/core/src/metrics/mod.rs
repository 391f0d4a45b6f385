//! Disentanglement and fidelity evaluation: the fixed-factor majority-vote
//! score (FVM), the mutual-information gap (MIG), Frechet feature distance
//! (FID) with a factor-predictor extractor, the distillation-alignment
//! estimate, and the auxiliary-encoder generative information bound (GILBO).

mod fid;
mod fvm;
mod gilbo;
mod latent;
mod mig;
mod report;
mod rid;

#[cfg(test)]
mod tests;

pub use fid::{fid_from_features, fid_score, train_factor_predictor, PredictorTrainConfig};
pub use fvm::{fvm_score, fvm_score_with, FvmConfig, VoteRecord};
pub use gilbo::{gilbo, CodeSampler, GilboConfig, GilboOutcome};
pub use latent::{encode_dataset, LatentMap};
pub use mig::{mig_score, mig_score_with, MigGap};
pub use report::MetricReport;
pub use rid::{estimate_r_id, RidEstimate};
