//! `eval`: score trained runs with the configured metrics and write
//! per-metric reports (CSV rows plus a JSON summary) aggregated across seeds.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::ArrayD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use id_distill_core::data::DatasetHandle;
use id_distill_core::metrics::{
    estimate_r_id, fid_score, fvm_score_with, gilbo, mig_score, train_factor_predictor,
    CodeSampler, FvmConfig, GilboConfig, MetricReport, PredictorTrainConfig,
};
use id_distill_core::nets::{FactorPredictorHandle, NetworkHandle};
use id_distill_core::train::{aggregated_posterior_sample, compose_z, LatentCode};

use crate::config::ExperimentConfig;
use crate::manifest::{config_dir, RunDir};

use super::artifacts::{emits_signed_images, load_run, LoadedRun};

fn sigmoid_images(logits: &ArrayD<f32>) -> ArrayD<f32> {
    logits.mapv(|v| 1.0 / (1.0 + (-v).exp()))
}

fn standard_normal(n: usize, d: usize, rng: &mut ChaCha8Rng) -> ndarray::Array2<f32> {
    use rand_distr::{Distribution, StandardNormal};
    ndarray::Array2::from_shape_simple_fn((n, d), || {
        let v: f64 = StandardNormal.sample(rng);
        v as f32
    })
}

/// Generate `n` images in `[0, 1]` from whichever generative network the run
/// trained: the stage-2 generator if present, otherwise the stage-1 decoder.
pub fn generate_images(
    cfg: &ExperimentConfig,
    loaded: &mut LoadedRun,
    dataset: &DatasetHandle,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ArrayD<f32>> {
    let c_dim = cfg.stage1.c_dim;
    let vaegan = cfg.stage2.enabled && cfg.stage2.mode == "vaegan";
    let mut chunks: Vec<ArrayD<f32>> = Vec::new();
    let mut done = 0usize;
    while done < n {
        let k = (n - done).min(64);
        let imgs = if let Some(generator) = loaded.generator.as_mut() {
            let z_dim = generator.spec.input_shape[0];
            if z_dim < c_dim {
                bail!("generator latent width {z_dim} is narrower than c_dim {c_dim}");
            }
            let s_dim = z_dim - c_dim;
            let c = match loaded.encoder.as_mut().or(loaded.stage2_encoder.as_mut()) {
                Some(enc) => aggregated_posterior_sample::<f32>(enc, dataset, k, rng)?,
                None => standard_normal(k, c_dim, rng),
            };
            let z = compose_z(&LatentCode {
                s: standard_normal(k, s_dim, rng),
                c,
            })?;
            let out = generator.forward(&z)?;
            if vaegan {
                sigmoid_images(&out)
            } else if emits_signed_images(generator) {
                out.mapv(|v| 0.5 * (v + 1.0))
            } else {
                out
            }
        } else if let Some(decoder) = loaded.decoder.as_mut() {
            let enc = loaded
                .encoder
                .as_mut()
                .context("decoder sampling needs the stage-1 encoder checkpoint")?;
            let c = aggregated_posterior_sample::<f32>(enc, dataset, k, rng)?;
            sigmoid_images(&decoder.forward(&c.into_dyn())?)
        } else {
            bail!("run has neither a generator nor a decoder checkpoint");
        };
        chunks.push(imgs);
        done += k;
    }
    let views: Vec<_> = chunks.iter().map(|c| c.view()).collect();
    Ok(ndarray::concatenate(ndarray::Axis(0), &views)?)
}

fn eval_encoder<'a>(loaded: &'a mut LoadedRun) -> Result<&'a mut NetworkHandle<f32>> {
    loaded
        .encoder
        .as_mut()
        .or(loaded.stage2_encoder.as_mut())
        .context("no encoder checkpoint; this metric needs one")
}

fn metric_value(
    metric: &str,
    cfg: &ExperimentConfig,
    loaded: &mut LoadedRun,
    dataset: &DatasetHandle,
    predictor: &mut Option<FactorPredictorHandle<f32>>,
    run_seed: u64,
) -> Result<f64> {
    let e = &cfg.eval;
    match metric {
        "fvm" => {
            let fvm_cfg = FvmConfig {
                votes: e.fvm_votes,
                samples_per_vote: e.fvm_samples_per_vote,
                variance_threshold: e.fvm_variance_threshold,
            };
            let (score, _) = fvm_score_with(eval_encoder(loaded)?, dataset, &fvm_cfg, e.seed)?;
            Ok(score)
        }
        "mig" => Ok(mig_score(eval_encoder(loaded)?, dataset, e.mig_bins)?),
        "fid" => {
            let predictor = predictor
                .as_mut()
                .context("factor predictor missing (trained once per eval)")?;
            let mut rng = ChaCha8Rng::seed_from_u64(e.seed ^ run_seed.wrapping_mul(0x9E37_79B9));
            let n = e.fid_samples.min(dataset.len()).max(2);
            let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..dataset.len())).collect();
            let real = dataset.batch::<f32>(&indices)?;
            let fake = generate_images(cfg, loaded, dataset, n, &mut rng)?;
            Ok(fid_score(predictor, &real, &fake)?)
        }
        "rid" => {
            if cfg.stage2.enabled && cfg.stage2.mode == "vaegan" {
                bail!("rid is undefined for the autoencoding baseline (no conditioned generator)");
            }
            let mut generator = loaded
                .generator
                .take()
                .context("rid needs a stage-2 generator checkpoint")?;
            let result = {
                let encoder = loaded
                    .stage2_encoder
                    .as_mut()
                    .or(loaded.encoder.as_mut())
                    .context("rid needs an encoder checkpoint")?;
                estimate_r_id(&mut generator, encoder, dataset, e.rid_samples, e.seed ^ run_seed)
            };
            loaded.generator = Some(generator);
            Ok(result?.mean)
        }
        "gilbo" => {
            if cfg.stage2.enabled && cfg.stage2.mode == "vaegan" {
                bail!("gilbo is undefined for the autoencoding baseline (no conditioned generator)");
            }
            let mut generator = loaded
                .generator
                .take()
                .context("gilbo needs a stage-2 generator checkpoint")?;
            let gilbo_cfg = GilboConfig {
                c_dim: cfg.stage1.c_dim,
                steps: e.gilbo_steps,
                batch_size: e.gilbo_batch,
                final_eval_n: e.gilbo_final_eval,
                ..GilboConfig::default()
            };
            let warm = loaded.encoder.clone().or(loaded.stage2_encoder.clone());
            let result = match loaded.encoder.as_mut().or(loaded.stage2_encoder.as_mut()) {
                Some(encoder) => gilbo(
                    &mut generator,
                    CodeSampler::AggregatedPosterior { encoder, dataset },
                    &gilbo_cfg,
                    e.seed ^ run_seed,
                    warm.as_ref(),
                ),
                None => gilbo(
                    &mut generator,
                    CodeSampler::Prior,
                    &gilbo_cfg,
                    e.seed ^ run_seed,
                    None,
                ),
            };
            loaded.generator = Some(generator);
            Ok(result?.value)
        }
        other => bail!("unknown metric `{other}`"),
    }
}

/// Evaluate every configured metric across the run seeds and write one
/// report per metric under `<root>/runs/<hash>/metrics/`.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    dataset: &DatasetHandle,
    out_root: &Path,
    seeds: Option<&[u64]>,
) -> Result<Vec<PathBuf>> {
    let hash = cfg.hash();
    let seeds: Vec<u64> = seeds.map(|s| s.to_vec()).unwrap_or_else(|| cfg.seeds.clone());
    if seeds.is_empty() {
        bail!("no seeds to evaluate");
    }

    let mut runs: Vec<(u64, LoadedRun)> = Vec::new();
    for &seed in &seeds {
        let run = RunDir::new(out_root, &hash, seed);
        if !run.has_manifest() || !run.manifest()?.is_complete() {
            bail!("run {hash}/{seed} is not complete; train it first");
        }
        runs.push((seed, load_run(cfg, &run, dataset.channels(), dataset.resolution())?));
    }

    // The feature extractor is shared by every FID evaluation.
    let mut predictor: Option<FactorPredictorHandle<f32>> =
        if cfg.eval.metrics.iter().any(|m| m == "fid") {
            let pt_cfg = PredictorTrainConfig {
                steps: cfg.eval.predictor_steps,
                batch_size: cfg.eval.predictor_batch,
                ..PredictorTrainConfig::default()
            };
            Some(
                train_factor_predictor(dataset, &pt_cfg, cfg.eval.seed)
                    .map_err(|e| anyhow::anyhow!("factor predictor: {e}"))?,
            )
        } else {
            None
        };

    let metrics_dir = config_dir(out_root, &hash).join("metrics");
    std::fs::create_dir_all(&metrics_dir)?;
    let mut written = Vec::new();
    for metric in &cfg.eval.metrics {
        let mut per_seed: Vec<(u64, f64)> = Vec::new();
        for (seed, loaded) in runs.iter_mut() {
            let value = metric_value(metric, cfg, loaded, dataset, &mut predictor, *seed)
                .with_context(|| format!("metric {metric}, seed {seed}"))?;
            per_seed.push((*seed, value));
        }
        let report = MetricReport::new(metric, per_seed, &hash)
            .map_err(|e| anyhow::anyhow!("report for {metric}: {e}"))?;
        let csv_path = metrics_dir.join(format!("{metric}.csv"));
        report.write_csv(&csv_path).map_err(|e| anyhow::anyhow!("writing report: {e}"))?;
        std::fs::write(
            metrics_dir.join(format!("{metric}.json")),
            report.summary_json().map_err(|e| anyhow::anyhow!("{e}"))?,
        )?;
        println!("{metric}: {:.4} ± {:.4} over {} seeds", report.mean, report.std, seeds.len());
        written.push(csv_path);
    }
    Ok(written)
}
