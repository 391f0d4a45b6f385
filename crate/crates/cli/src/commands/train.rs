//! `train`: run stage 1 (and stage 2, per mode) for every seed, persisting
//! checkpoints, loss curves, and a manifest per run directory.

use std::path::Path;

use anyhow::{bail, Result};

use id_distill_core::data::DatasetHandle;
use id_distill_core::train::{
    run_gan_stage, run_vae_stage, Stage1Run, Stage2Inputs, Stage2Run, TrainState,
};

use crate::config::ExperimentConfig;
use crate::manifest::{config_dir, RunDir, RunManifest};

/// Train-command options from the CLI flags.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Continue interrupted runs from their last checkpoint.
    pub resume: bool,
    /// Worker threads for independent seeds (0 or 1 = sequential).
    pub parallel: usize,
    /// Stop each stage early at this step count (checkpoints as usual);
    /// useful for smoke tests and for simulating interruption.
    pub max_steps: Option<u64>,
    /// Subset of the config's seeds to run; defaults to all of them.
    pub seeds: Option<Vec<u64>>,
}

/// Outcome of `cmd_train` for one seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SeedOutcome {
    Trained,
    AlreadyComplete,
}

fn capped(steps: u64, max: Option<u64>) -> u64 {
    match max {
        Some(m) => steps.min(m),
        None => steps,
    }
}

fn load_resume_state(path: &Path, resume: bool) -> Result<Option<TrainState>> {
    if resume && path.exists() {
        Ok(Some(TrainState::load_json(path)?))
    } else {
        Ok(None)
    }
}

/// Train one seed into its run directory. Completed runs are left untouched.
pub fn train_seed(
    cfg: &ExperimentConfig,
    dataset: &DatasetHandle,
    out_root: &Path,
    seed: u64,
    opts: &TrainOptions,
) -> Result<SeedOutcome> {
    let hash = cfg.hash();
    let run = RunDir::new(out_root, &hash, seed);
    if run.has_manifest() && run.manifest()?.is_complete() {
        println!("run {hash}/{seed} is already complete; leaving it untouched");
        return Ok(SeedOutcome::AlreadyComplete);
    }
    run.create()?;
    std::fs::write(run.config_file(), cfg.to_toml())?;
    std::fs::write(config_dir(out_root, &hash).join("label.txt"), cfg.label())?;
    let mut manifest = RunManifest::start(&hash, seed);
    manifest.save(&run.root)?;

    let truncated = opts.max_steps.map_or(false, |m| {
        (cfg.stage1.enabled && m < cfg.stage1.steps) || (cfg.stage2.enabled && m < cfg.stage2.steps)
    });
    match train_seed_inner(cfg, dataset, &run, seed, opts) {
        Ok(artifacts) => {
            if truncated {
                manifest.pause(&run.root, artifacts)?;
                println!("run {hash}/{seed}: paused at --max-steps; resume to finish");
            } else {
                manifest.complete(&run.root, artifacts)?;
                println!("run {hash}/{seed}: complete");
            }
            Ok(SeedOutcome::Trained)
        }
        Err(e) => {
            manifest.fail(&run.root, &format!("{e:#}"))?;
            Err(e)
        }
    }
}

fn train_seed_inner(
    cfg: &ExperimentConfig,
    dataset: &DatasetHandle,
    run: &RunDir,
    seed: u64,
    opts: &TrainOptions,
) -> Result<Vec<String>> {
    let ckpt = run.checkpoints();
    let mut artifacts: Vec<String> = vec!["config.toml".into()];

    let mut stage1: Option<Stage1Run<f32>> = None;
    if cfg.stage1.enabled {
        let mut core = cfg.stage1.to_core(seed)?;
        core.steps = capped(core.steps, opts.max_steps);
        let state_path = ckpt.join("stage1_state.json");
        let resume = load_resume_state(&state_path, opts.resume)?;
        let already_done = resume.as_ref().map(|s| s.step >= core.steps).unwrap_or(false);
        let out = run_vae_stage::<f32>(&core, dataset, resume.as_ref())
            .map_err(|e| anyhow::anyhow!("stage1: {e}"))?;
        if !already_done {
            // A frozen stage-1 checkpoint is never rewritten once it is done.
            out.state.save_json(&state_path)?;
            out.encoder.save(&ckpt.join("encoder.idgc"))?;
            out.decoder.save(&ckpt.join("decoder.idgc"))?;
            if let Some(tc) = &out.tc {
                tc.save(&ckpt.join("tc.idgc"))?;
            }
            out.curve.write_csv(&run.curves_file())?;
        }
        artifacts.push("checkpoints/stage1_state.json".into());
        artifacts.push("checkpoints/encoder.idgc".into());
        artifacts.push("checkpoints/decoder.idgc".into());
        if out.tc.is_some() {
            artifacts.push("checkpoints/tc.idgc".into());
        }
        stage1 = Some(out);
    }

    // Stage 2 consumes the *finished* stage-1 model; when --max-steps cut
    // stage 1 short, defer stage 2 to the resuming invocation so the resumed
    // trajectory is bit-identical to an uninterrupted one.
    let stage1_finished =
        !cfg.stage1.enabled || capped(cfg.stage1.steps, opts.max_steps) >= cfg.stage1.steps;
    if cfg.stage2.enabled && stage1_finished {
        let mut core = cfg.stage2.to_core(cfg.stage1.c_dim, seed)?;
        core.steps = capped(core.steps, opts.max_steps);
        let state_path = ckpt.join("stage2_state.json");
        let resume = load_resume_state(&state_path, opts.resume)?;
        let inputs = Stage2Inputs {
            encoder: stage1.as_ref().map(|s| &s.encoder),
            decoder: stage1.as_ref().map(|s| &s.decoder),
        };
        let out: Stage2Run<f32> = run_gan_stage(&core, dataset, inputs, resume.as_ref())
            .map_err(|e| anyhow::anyhow!("stage2: {e}"))?;
        out.state.save_json(&state_path)?;
        out.generator.save(&ckpt.join("generator.idgc"))?;
        out.discriminator.save(&ckpt.join("discriminator.idgc"))?;
        artifacts.push("checkpoints/stage2_state.json".into());
        artifacts.push("checkpoints/generator.idgc".into());
        artifacts.push("checkpoints/discriminator.idgc".into());
        if let Some(enc) = &out.encoder {
            enc.save(&ckpt.join("stage2_encoder.idgc"))?;
            artifacts.push("checkpoints/stage2_encoder.idgc".into());
        }
        if let Some(dec) = &out.decoder {
            dec.save(&ckpt.join("stage2_decoder.idgc"))?;
            artifacts.push("checkpoints/stage2_decoder.idgc".into());
        }
        out.curve.write_csv(&run.curves_file())?;
    }

    if run.curves_file().exists() {
        artifacts.push("curves.csv".into());
    }
    Ok(artifacts)
}

/// Train all requested seeds, scheduling them as independent workers up to
/// the configured parallelism.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    dataset: &DatasetHandle,
    out_root: &Path,
    opts: &TrainOptions,
) -> Result<Vec<(u64, SeedOutcome)>> {
    let seeds: Vec<u64> = match &opts.seeds {
        Some(list) => {
            for s in list {
                if !cfg.seeds.contains(s) {
                    bail!("--seeds: seed {s} is not in the config's seed list {:?}", cfg.seeds);
                }
            }
            list.clone()
        }
        None => cfg.seeds.clone(),
    };
    let workers = opts.parallel.max(1);
    let mut outcomes: Vec<(u64, SeedOutcome)> = Vec::new();
    if workers == 1 {
        for &seed in &seeds {
            outcomes.push((seed, train_seed(cfg, dataset, out_root, seed, opts)?));
        }
    } else {
        for chunk in seeds.chunks(workers) {
            let results: Vec<Result<(u64, SeedOutcome)>> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&seed| {
                        scope.spawn(move || {
                            train_seed(cfg, dataset, out_root, seed, opts).map(|o| (seed, o))
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("worker panicked"))
                    .collect()
            });
            for r in results {
                outcomes.push(r?);
            }
        }
    }
    Ok(outcomes)
}
