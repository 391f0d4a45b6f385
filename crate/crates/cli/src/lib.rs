//! Experiment orchestration for the two-stage distillation toolkit:
//! TOML experiment configs, seed-parallel training with resumable
//! hash-addressed run directories, metric evaluation, latent-traversal
//! figures, and cross-method report tables.

pub mod config;
pub mod manifest;

pub mod commands {
    pub mod artifacts;
    pub mod eval;
    pub mod generate;
    pub mod report;
    pub mod train;
    pub mod traverse;
}

pub use commands::eval::cmd_eval;
pub use commands::generate::{build_dataset, cmd_generate_data, load_or_generate};
pub use commands::report::cmd_report;
pub use commands::train::{cmd_train, train_seed, SeedOutcome, TrainOptions};
pub use commands::traverse::{cmd_traverse, TraverseOptions};
pub use config::ExperimentConfig;
pub use manifest::{RunDir, RunManifest};
