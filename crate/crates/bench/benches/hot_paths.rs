//! Benchmarks for the paths that dominate training and evaluation time:
//! encoder/generator forward passes, the distillation estimate's bilinear
//! bridge, the Frechet distance, and procedural dataset generation.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ndarray::{Array2, ArrayD, IxDyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use id_distill_core::data::{generate_dsprites, FactorSpace};
use id_distill_core::math::{frechet_distance, DistributionStats};
use id_distill_core::nets::{build_encoder, build_gan_pair, GanMode};
use id_distill_core::nn::bilinear_resize;

fn bench_encoder_forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut encoder = build_encoder::<f32>(10, 1, &mut rng).unwrap();
    let batch = ArrayD::from_shape_fn(IxDyn(&[16, 1, 64, 64]), |_| rng.gen_range(0.0f32..1.0));
    c.bench_function("encoder_forward_16x64x64", |b| {
        b.iter(|| encoder.forward(&batch).unwrap())
    });
}

fn bench_generator_forward(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut generator, _) = build_gan_pair::<f32>(GanMode::Mirror, 20, 64, 1, &mut rng).unwrap();
    let z = ArrayD::from_shape_fn(IxDyn(&[16, 20]), |_| rng.gen_range(-1.0f32..1.0));
    c.bench_function("generator_forward_16x64x64", |b| {
        b.iter(|| generator.forward(&z).unwrap())
    });
}

fn bench_bilinear_bridge(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let images = ArrayD::from_shape_fn(IxDyn(&[16, 3, 128, 128]), |_| rng.gen_range(0.0f32..1.0));
    c.bench_function("bilinear_resize_128_to_64", |b| {
        b.iter(|| bilinear_resize(&images, 64, 64).unwrap())
    });
}

fn bench_frechet_distance(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a: Array2<f64> = Array2::from_shape_fn((512, 32), |_| rng.gen_range(-1.0..1.0));
    let b: Array2<f64> = Array2::from_shape_fn((512, 32), |_| rng.gen_range(-1.0..1.0));
    let sa = DistributionStats::from_samples(a.view()).unwrap();
    let sb = DistributionStats::from_samples(b.view()).unwrap();
    c.bench_function("frechet_distance_d32", |bench| {
        bench.iter(|| frechet_distance(&sa, &sb).unwrap())
    });
}

fn bench_dataset_generation(c: &mut Criterion) {
    let space = FactorSpace::dsprites_with([2, 3, 4, 4, 4]).unwrap();
    c.bench_function("generate_sprites_384x64x64", |b| {
        b.iter_batched(
            || space.clone(),
            |s| generate_dsprites(&s, 64).unwrap(),
            BatchSize::LargeInput,
        )
    });
}

criterion_group!(
    hot_paths,
    bench_encoder_forward,
    bench_generator_forward,
    bench_bilinear_bridge,
    bench_frechet_distance,
    bench_dataset_generation
);
criterion_main!(hot_paths);
