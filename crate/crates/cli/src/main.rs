use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use id_distill_cli::commands::{eval, generate, report, train, traverse};
use id_distill_cli::config::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "id-distill",
    about = "Two-stage disentangled generative modeling: train, evaluate, and compare."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or ingest) the dataset file a config describes.
    GenerateData {
        /// Experiment config (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Output root (defaults to the config's out_dir, then ID_DISTILL_HOME).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train stage 1 (and stage 2, per mode) for every seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue interrupted runs from their last checkpoint.
        #[arg(long)]
        resume: bool,
        /// Worker threads for independent seeds.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Stop each stage early at this step count (smoke tests).
        #[arg(long)]
        max_steps: Option<u64>,
        /// Comma-separated subset of the config's seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Evaluate completed runs with the configured metrics.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of the config's seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Render latent-traversal grids for one seed's run.
    Traverse {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed whose checkpoints to traverse.
        #[arg(long)]
        seed: u64,
        /// Comma-separated code dimensions (default: all).
        #[arg(long, value_delimiter = ',')]
        dims: Option<Vec<usize>>,
        /// Sweep half-width in prior standard deviations.
        #[arg(long, default_value_t = 3.0)]
        range: f64,
        /// Images per row.
        #[arg(long, default_value_t = 10)]
        steps: usize,
        /// Seed of the anchor sample.
        #[arg(long, default_value_t = 0)]
        anchor_seed: u64,
    },
    /// Aggregate evaluation reports into markdown + CSV tables.
    Report {
        /// Output root holding `runs/`.
        #[arg(long)]
        out: PathBuf,
        /// Config hashes to include (default: all with metrics).
        #[arg(long, value_delimiter = ',')]
        hashes: Option<Vec<String>>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenerateData { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let root = cfg.out_root(out.as_deref());
            generate::cmd_generate_data(&cfg, &root)?;
        }
        Command::Train {
            config,
            out,
            resume,
            parallel,
            max_steps,
            seeds,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let root = cfg.out_root(out.as_deref());
            let dataset = generate::load_or_generate(&cfg, &root)?;
            let opts = train::TrainOptions {
                resume,
                parallel,
                max_steps,
                seeds,
            };
            train::cmd_train(&cfg, &dataset, &root, &opts)?;
        }
        Command::Eval { config, out, seeds } => {
            let cfg = ExperimentConfig::load(&config)?;
            let root = cfg.out_root(out.as_deref());
            let dataset = generate::load_or_generate(&cfg, &root)?;
            eval::cmd_eval(&cfg, &dataset, &root, seeds.as_deref())?;
        }
        Command::Traverse {
            config,
            out,
            seed,
            dims,
            range,
            steps,
            anchor_seed,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let root = cfg.out_root(out.as_deref());
            let opts = traverse::TraverseOptions {
                dims,
                range,
                steps,
                anchor_seed,
            };
            traverse::cmd_traverse(&cfg, &root, seed, &opts)?;
        }
        Command::Report { out, hashes } => {
            report::cmd_report(&out, hashes.as_deref())?;
        }
    }
    Ok(())
}
