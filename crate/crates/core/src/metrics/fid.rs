//! Frechet feature distance with a factor-predictor feature extractor.

use ndarray::{Array2, ArrayD, ArrayView2, Axis, Ix2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::DatasetHandle;
use crate::math::{frechet_distance, DistributionStats};
use crate::nets::{build_factor_predictor, FactorPredictorHandle};
use crate::nn::Adam;
use crate::{Error, Result};

/// Frechet distance between Gaussian fits of two feature matrices.
pub fn fid_from_features(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Result<f64> {
    let sa = DistributionStats::from_samples(a)?;
    let sb = DistributionStats::from_samples(b)?;
    frechet_distance(&sa, &sb)
}

/// Frechet distance between the extractor's penultimate features of a real
/// and a generated image batch (both in `[0, 1]`, shape `[N, C, H, W]`).
pub fn fid_score(
    extractor: &mut FactorPredictorHandle<f32>,
    real: &ArrayD<f32>,
    fake: &ArrayD<f32>,
) -> Result<f64> {
    let features = |ex: &mut FactorPredictorHandle<f32>, x: &ArrayD<f32>| -> Result<Array2<f64>> {
        let n = x.len_of(Axis(0));
        let mut out: Option<Array2<f64>> = None;
        let mut row = 0usize;
        for start in (0..n).step_by(256) {
            let end = (start + 256).min(n);
            let chunk = x.slice_axis(Axis(0), ndarray::Slice::from(start..end)).to_owned();
            let f = ex.features(&chunk)?;
            let f2 = f.into_dimensionality::<Ix2>().map_err(|_| Error::Shape("features must be 2-D".into()))?;
            let out = out.get_or_insert_with(|| Array2::zeros((n, f2.ncols())));
            out.slice_mut(ndarray::s![row..row + f2.nrows(), ..])
                .assign(&f2.mapv(f64::from));
            row += f2.nrows();
        }
        out.ok_or_else(|| Error::InvalidInput("empty batch".into()))
    };
    let fa = features(extractor, real)?;
    let fb = features(extractor, fake)?;
    let dim = fa.ncols();
    if fa.nrows() < dim || fb.nrows() < dim {
        eprintln!(
            "warning: feature statistics fit from fewer samples ({}/{}) than feature dimensions ({dim}); distance estimates will be noisy",
            fa.nrows(),
            fb.nrows()
        );
    }
    fid_from_features(fa.view(), fb.view())
}

/// Training budget and targets for the factor-predictor extractor.
#[derive(Debug, Clone)]
pub struct PredictorTrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    /// Fraction of the dataset held out for the accuracy gate.
    pub holdout_fraction: f64,
    /// Required held-out accuracy for every factor.
    pub target_accuracy: f64,
}

impl Default for PredictorTrainConfig {
    fn default() -> Self {
        PredictorTrainConfig {
            steps: 20_000,
            batch_size: 64,
            lr: 1e-3,
            holdout_fraction: 0.1,
            target_accuracy: 0.95,
        }
    }
}

fn softmax_rows(logits: &ArrayView2<'_, f32>) -> Array2<f32> {
    let mut out = logits.to_owned();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let m = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        row.mapv_inplace(|v| (v - m).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

/// Train the multi-head factor classifier and gate it on held-out accuracy.
/// Returns the trained handle; if any factor's held-out accuracy misses the
/// target, fails with the attained accuracies.
pub fn train_factor_predictor(
    dataset: &DatasetHandle,
    cfg: &PredictorTrainConfig,
    seed: u64,
) -> Result<FactorPredictorHandle<f32>> {
    let space = dataset
        .factor_space
        .as_ref()
        .ok_or_else(|| Error::Unsupported("factor prediction needs factor annotations".into()))?
        .clone();
    let table = dataset
        .factor_table
        .as_ref()
        .ok_or_else(|| Error::Unsupported("factor prediction needs a factor table".into()))?
        .clone();
    if dataset.resolution() != 64 {
        return Err(Error::InvalidConfig(format!(
            "the factor predictor expects 64x64 inputs, dataset is {0}x{0}",
            dataset.resolution()
        )));
    }
    if dataset.len() < 10 {
        return Err(Error::InvalidInput("need at least 10 samples to hold out a split".into()));
    }

    let mut split_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut split_rng);
    let holdout_len = ((dataset.len() as f64 * cfg.holdout_fraction).round() as usize).max(1);
    let (holdout, train) = order.split_at(holdout_len);

    let mut init_rng = crate::train::stream_rng(seed, 11, 0);
    let mut predictor = build_factor_predictor::<f32>(&space, dataset.channels(), &mut init_rng)?;
    let mut trunk_opt = Adam::<f32>::new(predictor.trunk.flat_params().len(), cfg.lr, 0.9, 0.999);
    let mut head_opts: Vec<Adam<f32>> = predictor
        .heads
        .iter()
        .map(|h| Adam::<f32>::new(h.flat_params().len(), cfg.lr, 0.9, 0.999))
        .collect();

    let factors = space.cardinalities().len();
    for step in 0..cfg.steps {
        let mut rng = crate::train::stream_rng(seed, 12, step);
        let batch: Vec<usize> = (0..cfg.batch_size.min(train.len()))
            .map(|_| train[rng.gen_range(0..train.len())])
            .collect();
        let images = dataset.batch::<f32>(&batch)?;
        let (features, trunk_tape) = predictor.trunk.forward_train(&images)?;
        let n = batch.len() as f32;

        let mut dfeatures: Option<ArrayD<f32>> = None;
        for k in 0..factors {
            let (logits, head_tape) = predictor.heads[k].forward_train(&features)?;
            let l2 = logits.view().into_dimensionality::<Ix2>().unwrap();
            let mut dlogits = softmax_rows(&l2);
            for (i, &idx) in batch.iter().enumerate() {
                dlogits[[i, table[[idx, k]] as usize]] -= 1.0;
            }
            dlogits.mapv_inplace(|v| v / n);
            let (dfeat, head_grad) = predictor.heads[k].backward(&head_tape, &dlogits.into_dyn());
            let mut p = predictor.heads[k].flat_params();
            head_opts[k].step(&mut p, &head_grad);
            predictor.heads[k].set_flat_params(&p)?;
            dfeatures = Some(match dfeatures {
                None => dfeat,
                Some(acc) => acc + dfeat,
            });
        }
        let (_, trunk_grad) = predictor
            .trunk
            .backward(&trunk_tape, &dfeatures.expect("at least one factor head"));
        let mut p = predictor.trunk.flat_params();
        trunk_opt.step(&mut p, &trunk_grad);
        predictor.trunk.set_flat_params(&p)?;
    }

    // Held-out accuracy gate, one pass in chunks.
    let mut correct = vec![0usize; factors];
    for chunk in holdout.chunks(256) {
        let images = dataset.batch::<f32>(chunk)?;
        let preds = crate::nets::predict_factors(&mut predictor, &images)?;
        for (k, pred) in preds.iter().enumerate() {
            for (i, &idx) in chunk.iter().enumerate() {
                correct[k] += usize::from(pred[i] == table[[idx, k]] as usize);
            }
        }
    }
    let accuracies: Vec<f64> = correct
        .iter()
        .map(|&c| c as f64 / holdout.len() as f64)
        .collect();
    if accuracies.iter().any(|&a| a < cfg.target_accuracy) {
        let detail: Vec<String> = space
            .names()
            .iter()
            .zip(accuracies.iter())
            .map(|(name, a)| format!("{name}={a:.3}"))
            .collect();
        return Err(Error::TrainingFailure(format!(
            "factor predictor missed the {:.2} held-out accuracy target: {}",
            cfg.target_accuracy,
            detail.join(", ")
        )));
    }
    Ok(predictor)
}
