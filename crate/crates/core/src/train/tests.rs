use ndarray::{Array2, Array4, ArrayD, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{generate_dsprites, DatasetHandle, FactorSpace, VariantConfig};
use crate::math::{frechet_distance, DistributionStats};
use crate::nets::{
    build_encoder, ArchitectureSpec, GanMode, LayerDesc, NetworkHandle, Role,
};
use crate::nn::{Adam, Flatten, Layer, LeakyRelu, Linear, Network, Scalar};
use crate::Error;

use super::losses::{
    bernoulli_nll_grad, gaussian_kl_grad, gaussian_nll_grad, r_id_backprop, standard_normal_matrix,
    tc_disc_grad, vae_backprop,
};
use super::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn fc_spec(role: Role, input_shape: Vec<usize>, c_dim: usize) -> ArchitectureSpec {
    ArchitectureSpec {
        role,
        input_shape,
        c_dim,
        s_dim: 0,
        layers: Vec::<LayerDesc>::new(),
    }
}

/// Encoder stub with all-zero weights: reports the unit prior for any input.
fn zero_encoder(resolution: usize, channels: usize, c_dim: usize) -> NetworkHandle<f64> {
    let layers: Vec<Box<dyn Layer<f64>>> = vec![
        Box::new(Flatten),
        Box::new(Linear::zeros(channels * resolution * resolution, 2 * c_dim)),
    ];
    NetworkHandle {
        spec: fc_spec(Role::Encoder, vec![channels, resolution, resolution], c_dim),
        net: Network::new(layers),
    }
}

fn random_linear_encoder(resolution: usize, channels: usize, c_dim: usize, seed: u64) -> NetworkHandle<f64> {
    let mut r = rng(seed);
    let layers: Vec<Box<dyn Layer<f64>>> = vec![
        Box::new(Flatten),
        Box::new(Linear::new(channels * resolution * resolution, 2 * c_dim, &mut r)),
    ];
    NetworkHandle {
        spec: fc_spec(Role::Encoder, vec![channels, resolution, resolution], c_dim),
        net: Network::new(layers),
    }
}

fn small_tc_disc(c_dim: usize, seed: u64) -> NetworkHandle<f64> {
    let mut r = rng(seed);
    let layers: Vec<Box<dyn Layer<f64>>> = vec![
        Box::new(Linear::new(c_dim, 64, &mut r)),
        Box::new(LeakyRelu::new(0.2)),
        Box::new(Linear::new(64, 64, &mut r)),
        Box::new(LeakyRelu::new(0.2)),
        Box::new(Linear::new(64, 2, &mut r)),
    ];
    NetworkHandle {
        spec: fc_spec(Role::TcDiscriminator, vec![c_dim], c_dim),
        net: Network::new(layers),
    }
}

fn tiny_dataset(resolution: usize) -> DatasetHandle {
    let space = FactorSpace::dsprites_with([1, 2, 2, 2, 2]).unwrap();
    generate_dsprites(&space, resolution).unwrap()
}

fn correlated_pair(n: usize, rho: f64, r: &mut ChaCha8Rng) -> Array2<f64> {
    let mut out = Array2::zeros((n, 2));
    for i in 0..n {
        let a: f64 = StandardNormal.sample(r);
        let b: f64 = StandardNormal.sample(r);
        out[[i, 0]] = a;
        out[[i, 1]] = rho * a + (1.0 - rho * rho).sqrt() * b;
    }
    out
}

// ---------------------------------------------------------------- losses ---

#[test]
fn kl_and_nll_gradients_match_finite_differences() {
    let mut r = rng(7);
    let mu = standard_normal_matrix::<f64>(3, 4, &mut r);
    let lv = standard_normal_matrix::<f64>(3, 4, &mut r).mapv(|v| 0.5 * v);
    let c = standard_normal_matrix::<f64>(3, 4, &mut r);
    let h = 1e-6;

    let (_, dmu, dlv) = gaussian_kl_grad(&mu, &lv);
    let (_, dmu_n, dlv_n) = gaussian_nll_grad(&c, &mu, &lv);
    for i in 0..3 {
        for j in 0..4 {
            let fd = |f: &dyn Fn(&Array2<f64>, &Array2<f64>) -> f64, wrt_mu: bool| {
                let mut p = mu.clone();
                let mut q = lv.clone();
                if wrt_mu {
                    p[[i, j]] += h;
                } else {
                    q[[i, j]] += h;
                }
                let up = f(&p, &q);
                if wrt_mu {
                    p[[i, j]] -= 2.0 * h;
                } else {
                    q[[i, j]] -= 2.0 * h;
                }
                (up - f(&p, &q)) / (2.0 * h)
            };
            let kl_f = |m: &Array2<f64>, l: &Array2<f64>| gaussian_kl_grad(m, l).0;
            let nll_f = |m: &Array2<f64>, l: &Array2<f64>| gaussian_nll_grad(&c, m, l).0;
            assert!((fd(&kl_f, true) - dmu[[i, j]]).abs() < 1e-6);
            assert!((fd(&kl_f, false) - dlv[[i, j]]).abs() < 1e-6);
            assert!((fd(&nll_f, true) - dmu_n[[i, j]]).abs() < 1e-6);
            assert!((fd(&nll_f, false) - dlv_n[[i, j]]).abs() < 1e-6);
        }
    }
}

#[test]
fn unit_kl_weight_total_is_reconstruction_plus_kl() {
    let mut enc = random_linear_encoder(8, 1, 3, 11);
    let mut r = rng(12);
    let dec_layers: Vec<Box<dyn Layer<f64>>> = vec![
        Box::new(Linear::new(3, 64, &mut r)),
        Box::new(crate::nn::Reshape { c: 1, h: 8, w: 8 }),
    ];
    let mut dec = NetworkHandle {
        spec: fc_spec(Role::Decoder, vec![3], 3),
        net: Network::new(dec_layers),
    };
    let batch = ArrayD::from_shape_fn(ndarray::IxDyn(&[4, 1, 8, 8]), |_| r.gen_range(0.0..1.0));
    let eps = standard_normal_matrix::<f64>(4, 3, &mut r);
    let out = vae_backprop(&mut enc, &mut dec, &batch, 1.0, &eps, None, 0).unwrap();
    assert_eq!(out.total, out.recon + out.kl);
    assert_eq!(out.tc_penalty, 0.0);
}

#[test]
fn perfect_reconstruction_drives_loss_to_zero() {
    // Zero images, zero latent, and a decoder whose every parameter is a
    // large negative constant: the logits saturate at "off" and both loss
    // terms vanish.
    let mut enc = zero_encoder(8, 1, 3);
    let mut r = rng(13);
    let dec_layers: Vec<Box<dyn Layer<f64>>> = vec![
        Box::new(Linear::new(3, 64, &mut r)),
        Box::new(crate::nn::Reshape { c: 1, h: 8, w: 8 }),
    ];
    let mut dec = NetworkHandle {
        spec: fc_spec(Role::Decoder, vec![3], 3),
        net: Network::new(dec_layers),
    };
    let flat = ndarray::Array1::from_elem(dec.net.flat_params().len(), -20.0);
    dec.net.set_flat_params(&flat).unwrap();
    let batch = ArrayD::zeros(ndarray::IxDyn(&[4, 1, 8, 8]));
    let eps = Array2::zeros((4, 3));
    let out = vae_backprop(&mut enc, &mut dec, &batch, 0.0, &eps, None, 0).unwrap();
    assert!(out.kl.abs() < 1e-12);
    assert!(out.total < 1e-6, "total {} should be ~0", out.total);
}

#[test]
fn reconstruction_loss_rejects_shape_mismatch() {
    let x = ArrayD::<f64>::zeros(ndarray::IxDyn(&[2, 4]));
    let l = ArrayD::<f64>::zeros(ndarray::IxDyn(&[2, 5]));
    assert!(matches!(bernoulli_nll_grad(&x, &l), Err(Error::Shape(_))));
}

#[test]
fn latent_permutation_preserves_marginals_and_needs_a_batch() {
    let mut r = rng(17);
    let c = standard_normal_matrix::<f64>(32, 3, &mut r);
    let p = permute_latents(&c, &mut r).unwrap();
    for j in 0..3 {
        let mut a: Vec<f64> = c.column(j).to_vec();
        let mut b: Vec<f64> = p.column(j).to_vec();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b, "column {j} marginal changed");
    }
    let single = standard_normal_matrix::<f64>(1, 3, &mut r);
    assert!(matches!(permute_latents(&single, &mut r), Err(Error::InvalidInput(_))));
}

#[test]
fn tc_terms_reject_tiny_batches() {
    let mut tc = small_tc_disc(3, 19);
    let one = Array2::<f64>::zeros((1, 3));
    let two = Array2::<f64>::zeros((2, 3));
    assert!(factor_tc_penalty(&one, &mut tc).is_err());
    assert!(tc_discriminator_loss(&one, &two, &mut tc).is_err());
}

fn train_tc_disc(joint: impl Fn(&mut ChaCha8Rng) -> Array2<f64>, seed: u64) -> f64 {
    let mut tc = small_tc_disc(2, seed);
    let mut opt = Adam::<f64>::new(tc.net.flat_params().len(), 1e-3, 0.9, 0.999);
    let mut r = rng(seed ^ 0xABCD);
    for _ in 0..300 {
        let c = joint(&mut r);
        let perm = permute_latents(&c, &mut r).unwrap();
        let (_, grad) = tc_disc_grad(&c, &perm, &mut tc).unwrap();
        let mut p = tc.net.flat_params();
        opt.step(&mut p, &grad);
        tc.net.set_flat_params(&p).unwrap();
    }
    let c = joint(&mut r);
    let perm = permute_latents(&c, &mut r).unwrap();
    tc_discriminator_accuracy(&c, &perm, &mut tc).unwrap()
}

#[test]
fn tc_discriminator_is_near_chance_on_factorized_codes() {
    let acc = train_tc_disc(|r| standard_normal_matrix::<f64>(512, 2, r), 23);
    assert!(
        (acc - 0.5).abs() < 0.05,
        "accuracy {acc} should be near chance for independent dimensions"
    );
}

#[test]
fn tc_discriminator_detects_strong_correlation() {
    let acc = train_tc_disc(|r| correlated_pair(512, 0.95, r), 29);
    assert!(acc > 0.7, "accuracy {acc} should clearly beat chance at rho=0.95");
}

// ------------------------------------------------------------------ r_id ---

#[test]
fn distillation_loss_matches_closed_form_for_prior_encoder() {
    // An all-zero encoder reports N(0, I) for any input, so the loss is the
    // exact negative log-density of the codes under the unit prior.
    let mut enc = zero_encoder(16, 1, 3);
    let mut r = rng(31);
    let gen = ArrayD::from_shape_fn(ndarray::IxDyn(&[5, 1, 16, 16]), |_| r.gen_range(0.0..1.0));
    let c = standard_normal_matrix::<f64>(5, 3, &mut r);
    let loss = r_id_loss(&gen, &c, &mut enc).unwrap();
    let expected = c
        .iter()
        .map(|&v| 0.5 * (1.8378770664093453 + v * v))
        .sum::<f64>()
        / 5.0;
    assert!((loss - expected).abs() < 1e-12);
}

#[test]
fn distillation_gradient_matches_finite_differences_across_resolutions() {
    // Generated batch at 32x32 against a 16x16 encoder exercises the
    // bilinear bridge and its adjoint.
    let mut enc = random_linear_encoder(16, 1, 2, 37);
    let mut r = rng(38);
    let mut gen = ArrayD::from_shape_fn(ndarray::IxDyn(&[2, 1, 32, 32]), |_| r.gen_range(0.2..0.8));
    let c = standard_normal_matrix::<f64>(2, 2, &mut r);
    let (_, dgen, enc_grad) = r_id_backprop(&gen, &c, &mut enc, false).unwrap();
    assert!(enc_grad.is_none());

    let h = 1e-5;
    for _ in 0..10 {
        let idx: Vec<usize> = vec![
            r.gen_range(0..2),
            0,
            r.gen_range(0..32),
            r.gen_range(0..32),
        ];
        let i = ndarray::IxDyn(&idx);
        let orig = gen[&i];
        gen[&i] = orig + h;
        let up = r_id_loss(&gen, &c, &mut enc).unwrap();
        gen[&i] = orig - h;
        let down = r_id_loss(&gen, &c, &mut enc).unwrap();
        gen[&i] = orig;
        let fd = (up - down) / (2.0 * h);
        let g = dgen[&i];
        let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-4);
        assert!(rel < 1e-4, "coordinate {idx:?}: fd {fd} vs analytic {g}");
    }
}

#[test]
fn distillation_returns_encoder_gradient_on_request() {
    let mut enc = random_linear_encoder(16, 1, 2, 41);
    let mut r = rng(42);
    let gen = ArrayD::from_shape_fn(ndarray::IxDyn(&[3, 1, 16, 16]), |_| r.gen_range(0.0..1.0));
    let c = standard_normal_matrix::<f64>(3, 2, &mut r);
    let (_, _, grad) = r_id_backprop(&gen, &c, &mut enc, true).unwrap();
    let grad = grad.expect("encoder gradient requested");
    assert_eq!(grad.len(), enc.net.flat_params().len());
    assert!(grad.iter().any(|&v| v != 0.0));
}

// ------------------------------------------------------------- gan_step ---

fn toy_generator(seed: u64, z_dim: usize) -> Network<f64> {
    let mut r = rng(seed);
    Network::new(vec![
        Box::new(Linear::new(z_dim, 32, &mut r)) as Box<dyn Layer<f64>>,
        Box::new(LeakyRelu::new(0.2)),
        Box::new(Linear::new(32, 32, &mut r)),
        Box::new(LeakyRelu::new(0.2)),
        Box::new(Linear::new(32, 2, &mut r)),
    ])
}

fn toy_discriminator(seed: u64) -> Network<f64> {
    let mut r = rng(seed);
    Network::new(vec![
        Box::new(Linear::new(2, 32, &mut r)) as Box<dyn Layer<f64>>,
        Box::new(LeakyRelu::new(0.2)),
        Box::new(Linear::new(32, 32, &mut r)),
        Box::new(LeakyRelu::new(0.2)),
        Box::new(Linear::new(32, 1, &mut r)),
    ])
}

#[test]
fn zero_logit_discriminator_yields_log4_and_log2_losses() {
    let mut g = toy_generator(43, 4);
    let mut d = Network::<f64>::new(vec![
        Box::new(Flatten) as Box<dyn Layer<f64>>,
        Box::new(Linear::zeros(2, 1)),
    ]);
    // Vanishing learning rates keep the parameters (and hence the measured
    // generator loss) at their zero-logit values through the step.
    let mut g_opt = Adam::<f64>::new(g.flat_params().len(), 1e-12, 0.5, 0.999);
    let mut d_opt = Adam::<f64>::new(d.flat_params().len(), 1e-12, 0.5, 0.999);
    let mut r = rng(44);
    let real = standard_normal_matrix::<f64>(16, 2, &mut r).into_dyn();
    let z1 = standard_normal_matrix::<f64>(16, 4, &mut r).into_dyn();
    let z2 = standard_normal_matrix::<f64>(16, 4, &mut r).into_dyn();
    let out = gan_step(&real, &z1, &z2, &mut g, &mut d, &mut g_opt, &mut d_opt, None, 0).unwrap();
    assert!((out.d_loss - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    assert!((out.g_loss - std::f64::consts::LN_2).abs() < 1e-9);
    assert!(out.reg_loss.is_none());
}

#[test]
fn gan_step_updates_both_networks() {
    let mut g = toy_generator(47, 4);
    let mut d = toy_discriminator(48);
    let g0 = g.flat_params();
    let d0 = d.flat_params();
    let mut g_opt = Adam::<f64>::new(g0.len(), 1e-3, 0.5, 0.999);
    let mut d_opt = Adam::<f64>::new(d0.len(), 1e-3, 0.5, 0.999);
    let mut r = rng(49);
    let real = standard_normal_matrix::<f64>(16, 2, &mut r).into_dyn();
    let z1 = standard_normal_matrix::<f64>(16, 4, &mut r).into_dyn();
    let z2 = standard_normal_matrix::<f64>(16, 4, &mut r).into_dyn();
    gan_step(&real, &z1, &z2, &mut g, &mut d, &mut g_opt, &mut d_opt, None, 0).unwrap();
    assert!(g.flat_params().iter().zip(g0.iter()).any(|(a, b)| a != b));
    assert!(d.flat_params().iter().zip(d0.iter()).any(|(a, b)| a != b));
}

#[test]
fn gan_step_flags_non_finite_losses() {
    let mut g = toy_generator(53, 4);
    let mut d = toy_discriminator(54);
    let bad = d.flat_params().mapv(|_| f64::NAN);
    d.set_flat_params(&bad).unwrap();
    let mut g_opt = Adam::<f64>::new(g.flat_params().len(), 1e-3, 0.5, 0.999);
    let mut d_opt = Adam::<f64>::new(d.flat_params().len(), 1e-3, 0.5, 0.999);
    let mut r = rng(55);
    let real = standard_normal_matrix::<f64>(8, 2, &mut r).into_dyn();
    let z = standard_normal_matrix::<f64>(8, 4, &mut r).into_dyn();
    let err = gan_step(&real, &z, &z, &mut g, &mut d, &mut g_opt, &mut d_opt, None, 3).unwrap_err();
    assert!(matches!(err, Error::TrainingDivergence { step: 3, .. }));
}

#[test]
fn adversarial_training_closes_in_on_a_gaussian_target() {
    // 2-D toy: the generator should shrink the distribution distance to the
    // target Gaussian by at least 5x from its untrained starting point.
    for seed in [101u64, 202, 303] {
        let mut g = toy_generator(seed, 4);
        let mut d = toy_discriminator(seed ^ 0xF0F0);
        let mut g_opt = Adam::<f64>::new(g.flat_params().len(), 1e-3, 0.5, 0.999);
        let mut d_opt = Adam::<f64>::new(d.flat_params().len(), 2e-3, 0.5, 0.999);
        let mut r = rng(seed ^ 0x1234);
        let target = |r: &mut ChaCha8Rng, n: usize| -> Array2<f64> {
            let mut out = Array2::zeros((n, 2));
            for i in 0..n {
                let a: f64 = StandardNormal.sample(r);
                let b: f64 = StandardNormal.sample(r);
                out[[i, 0]] = 2.0 + 0.7 * a;
                out[[i, 1]] = -1.0 + 0.5 * b;
            }
            out
        };
        let eval = |g: &mut Network<f64>, r: &mut ChaCha8Rng| -> f64 {
            let z = standard_normal_matrix::<f64>(2000, 4, r).into_dyn();
            let samples = g.forward(&z, false).unwrap();
            let samples = samples.into_dimensionality::<ndarray::Ix2>().unwrap();
            let got = DistributionStats::from_samples(samples.view()).unwrap();
            let want = DistributionStats::from_samples(target(r, 4000).view()).unwrap();
            frechet_distance(&got, &want).unwrap()
        };
        let before = eval(&mut g, &mut r);
        for step in 0..1500 {
            let real = target(&mut r, 128).into_dyn();
            let z1 = standard_normal_matrix::<f64>(128, 4, &mut r).into_dyn();
            let z2 = standard_normal_matrix::<f64>(128, 4, &mut r).into_dyn();
            gan_step(&real, &z1, &z2, &mut g, &mut d, &mut g_opt, &mut d_opt, None, step).unwrap();
        }
        let after = eval(&mut g, &mut r);
        assert!(
            after * 5.0 < before,
            "seed {seed}: distance went {before} -> {after}, expected at least 5x reduction"
        );
    }
}

// -------------------------------------------------------------- sampling ---

#[test]
fn aggregated_posterior_of_prior_encoder_has_prior_moments() {
    let dataset = tiny_dataset(16);
    let mut enc = zero_encoder(16, 1, 4);
    let n = 10_000;
    let mut r = rng(61);
    let samples = aggregated_posterior_sample(&mut enc, &dataset, n, &mut r).unwrap();
    assert_eq!(samples.shape(), &[n, 4]);
    let bound = 4.0 / (n as f64).sqrt();
    for j in 0..4 {
        let col = samples.column(j);
        let mean = col.mean().unwrap();
        let var = col.mapv(|v| (v - mean) * (v - mean)).mean().unwrap();
        assert!(mean.abs() < bound, "dim {j} mean {mean} exceeds {bound}");
        assert!((0.9..=1.1).contains(&var), "dim {j} variance {var} not near 1");
    }
}

#[test]
fn aggregated_posterior_is_deterministic_and_validates_inputs() {
    let dataset = tiny_dataset(16);
    let mut enc = random_linear_encoder(16, 1, 3, 67);
    let a = aggregated_posterior_sample(&mut enc, &dataset, 70, &mut rng(5)).unwrap();
    let b = aggregated_posterior_sample(&mut enc, &dataset, 70, &mut rng(5)).unwrap();
    assert_eq!(a, b);
    assert!(aggregated_posterior_sample(&mut enc, &dataset, 0, &mut rng(5)).is_err());

    let empty = DatasetHandle {
        factor_space: None,
        images: Array4::zeros((0, 16, 16, 1)),
        factor_table: None,
        variant: VariantConfig::plain(),
    };
    assert!(matches!(
        aggregated_posterior_sample(&mut enc, &empty, 10, &mut rng(5)),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn latent_composition_round_trips() {
    let mut r = rng(71);
    let code = prior_sample::<f64>(6, 5, 3, &mut r);
    let z = compose_z(&code).unwrap();
    assert_eq!(z.shape(), &[6, 8]);
    let back = split_z(&z, 3).unwrap();
    assert_eq!(back.s, code.s);
    assert_eq!(back.c, code.c);
    // The code occupies the trailing columns.
    let z2 = z.view().into_dimensionality::<ndarray::Ix2>().unwrap();
    assert_eq!(z2[[0, 5]], code.c[[0, 0]]);

    let bad = LatentCode {
        s: Array2::<f64>::zeros((2, 3)),
        c: Array2::<f64>::zeros((3, 3)),
    };
    assert!(compose_z(&bad).is_err());
    assert!(split_z(&z, 9).is_err());
}

// ---------------------------------------------------------------- stage 1 ---

#[test]
fn stage1_config_is_validated() {
    let base = VAEStageConfig::default();
    let bad = VAEStageConfig {
        objective: VaeObjective::Vae,
        beta: 4.0,
        ..base.clone()
    };
    assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
    let bad = VAEStageConfig {
        gamma: 1.0,
        ..base.clone()
    };
    assert!(bad.validate().is_err());
    let bad = VAEStageConfig {
        objective: VaeObjective::FactorVae,
        gamma: 0.0,
        ..base.clone()
    };
    assert!(bad.validate().is_err());
    let bad = VAEStageConfig {
        batch_size: 1,
        ..base.clone()
    };
    assert!(bad.validate().is_err());
    let bad = VAEStageConfig { c_dim: 0, ..base };
    assert!(bad.validate().is_err());
}

fn fast_stage1_config() -> VAEStageConfig {
    VAEStageConfig {
        objective: VaeObjective::BetaVae,
        beta: 0.5,
        gamma: 0.0,
        c_dim: 4,
        steps: 12,
        batch_size: 8,
        lr: 3e-4,
        tc_lr: 1e-4,
        seed: 9,
    }
}

#[test]
fn stage1_loss_decreases_quickly() {
    let dataset = tiny_dataset(64);
    let run = run_vae_stage::<f32>(&fast_stage1_config(), &dataset, None).unwrap();
    let totals = run.curve.series("total");
    assert_eq!(totals.len(), 12);
    let first: f64 = totals[..3].iter().map(|&(_, v)| v).sum::<f64>() / 3.0;
    let last: f64 = totals[9..].iter().map(|&(_, v)| v).sum::<f64>() / 3.0;
    assert!(last < first, "loss did not decrease: {first} -> {last}");
    assert!(totals.iter().all(|&(_, v)| v.is_finite()));
}

#[test]
fn stage1_is_deterministic_and_resumes_bit_exactly() {
    let dataset = tiny_dataset(64);
    let mut cfg = fast_stage1_config();
    cfg.steps = 4;
    let full = run_vae_stage::<f32>(&cfg, &dataset, None).unwrap();
    let again = run_vae_stage::<f32>(&cfg, &dataset, None).unwrap();
    assert_eq!(full.encoder.net.flat_params(), again.encoder.net.flat_params());

    let mut half_cfg = cfg.clone();
    half_cfg.steps = 2;
    let half = run_vae_stage::<f32>(&half_cfg, &dataset, None).unwrap();
    let resumed = run_vae_stage::<f32>(&cfg, &dataset, Some(&half.state)).unwrap();
    assert_eq!(full.encoder.net.flat_params(), resumed.encoder.net.flat_params());
    assert_eq!(full.decoder.net.flat_params(), resumed.decoder.net.flat_params());
}

#[test]
fn stage1_factorized_objective_trains_its_discriminator() {
    let dataset = tiny_dataset(64);
    let cfg = VAEStageConfig {
        objective: VaeObjective::FactorVae,
        beta: 1.0,
        gamma: 6.4,
        steps: 2,
        ..fast_stage1_config()
    };
    let run = run_vae_stage::<f32>(&cfg, &dataset, None).unwrap();
    assert!(run.tc.is_some());
    assert_eq!(run.curve.series("tc_disc").len(), 2);
    assert_eq!(run.curve.series("tc_penalty").len(), 2);
}

#[test]
fn stage1_rejects_wrong_resolution() {
    let dataset = tiny_dataset(16);
    let err = run_vae_stage::<f32>(&fast_stage1_config(), &dataset, None).err().unwrap();
    assert!(matches!(err, Error::InvalidConfig(_)));
}

#[test]
fn vae_loss_is_deterministic() {
    let dataset = tiny_dataset(64);
    let mut r = rng(73);
    let mut enc = build_encoder::<f32>(4, 1, &mut r).unwrap();
    let mut dec = crate::nets::build_decoder::<f32>(4, 1, &mut r).unwrap();
    let batch = dataset.batch::<f32>(&[0, 3, 7, 11]).unwrap();
    let a = vae_loss(&batch, &mut enc, &mut dec, 4.0, 99).unwrap();
    let b = vae_loss(&batch, &mut enc, &mut dec, 4.0, 99).unwrap();
    assert_eq!(a, b);
    assert!((a.0 - (a.1 + 4.0 * a.2)).abs() < 1e-9);
}

/// Longer trend check across seeds; slow on small hardware, run explicitly.
#[test]
#[ignore = "long-running trend check; run explicitly"]
fn stage1_long_run_loss_trend() {
    let dataset = tiny_dataset(64);
    for seed in [1u64, 2, 3] {
        let cfg = VAEStageConfig {
            steps: 200,
            batch_size: 16,
            seed,
            ..fast_stage1_config()
        };
        let run = run_vae_stage::<f32>(&cfg, &dataset, None).unwrap();
        let totals = run.curve.series("total");
        let first: f64 = totals[..10].iter().map(|&(_, v)| v).sum::<f64>() / 10.0;
        let last: f64 = totals[190..].iter().map(|&(_, v)| v).sum::<f64>() / 10.0;
        assert!(last < first, "seed {seed}: {first} -> {last}");
    }
}

// ---------------------------------------------------------------- stage 2 ---

fn fast_stage2_config(mode: StageTwoMode) -> GANStageConfig {
    GANStageConfig {
        mode,
        lambda: 0.1,
        beta: 1.0,
        c_dim: 4,
        s_dim: 4,
        steps: 2,
        batch_size: 4,
        g_lr: 1e-4,
        d_lr: 4e-4,
        d_steps_per_g: 1,
        seed: 21,
        arch: GanMode::Mirror,
    }
}

fn trained_encoder(dataset: &DatasetHandle) -> NetworkHandle<f32> {
    let cfg = VAEStageConfig {
        steps: 1,
        ..fast_stage1_config()
    };
    run_vae_stage::<f32>(&cfg, dataset, None).unwrap().encoder
}

#[test]
fn stage2_config_is_validated() {
    let dataset = tiny_dataset(64);
    let bad = GANStageConfig {
        lambda: -0.5,
        ..fast_stage2_config(StageTwoMode::IdGan)
    };
    assert!(bad.validate().is_err());
    let bad = GANStageConfig {
        lambda: 10.5,
        ..fast_stage2_config(StageTwoMode::IdGan)
    };
    assert!(bad.validate().is_err());
    let bad = GANStageConfig {
        d_steps_per_g: 0,
        ..fast_stage2_config(StageTwoMode::Gan)
    };
    assert!(bad.validate().is_err());
    let bad = GANStageConfig {
        arch: GanMode::Resnet,
        ..fast_stage2_config(StageTwoMode::VaeGan)
    };
    assert!(bad.validate().is_err());

    // Encoder-dependent modes refuse to run without one.
    for mode in [StageTwoMode::IdGan, StageTwoMode::IdGanNoDistill, StageTwoMode::CGan] {
        let err = run_gan_stage::<f32>(
            &fast_stage2_config(mode),
            &dataset,
            Stage2Inputs::default(),
            None,
        )
        .err()
        .unwrap();
        assert!(matches!(err, Error::InvalidConfig(_)), "{mode:?}");
    }
}

#[test]
fn stage2_distillation_keeps_encoder_frozen_and_logs_the_term() {
    let dataset = tiny_dataset(64);
    let encoder = trained_encoder(&dataset);
    let before = encoder.net.flat_params();
    let run = run_gan_stage::<f32>(
        &fast_stage2_config(StageTwoMode::IdGan),
        &dataset,
        Stage2Inputs {
            encoder: Some(&encoder),
            decoder: None,
        },
        None,
    )
    .unwrap();
    let frozen = run.encoder.unwrap();
    assert_eq!(before, frozen.net.flat_params(), "frozen encoder drifted");
    assert_eq!(run.curve.series("r_id").len(), 2);
    assert!(run.curve.last("d_loss").unwrap().is_finite());
}

#[test]
fn stage2_zero_weight_matches_the_no_distillation_ablation() {
    let dataset = tiny_dataset(64);
    let encoder = trained_encoder(&dataset);
    let inputs = || Stage2Inputs {
        encoder: Some(&encoder),
        decoder: None,
    };
    let zero = GANStageConfig {
        lambda: 0.0,
        ..fast_stage2_config(StageTwoMode::IdGan)
    };
    let ablation = GANStageConfig {
        lambda: 0.0,
        ..fast_stage2_config(StageTwoMode::IdGanNoDistill)
    };
    let a = run_gan_stage::<f32>(&zero, &dataset, inputs(), None).unwrap();
    let b = run_gan_stage::<f32>(&ablation, &dataset, inputs(), None).unwrap();
    assert_eq!(a.generator.net.flat_params(), b.generator.net.flat_params());
    assert!(a.curve.series("r_id").is_empty());
}

#[test]
fn stage2_is_deterministic_and_resumes_bit_exactly() {
    let dataset = tiny_dataset(64);
    let mut cfg = fast_stage2_config(StageTwoMode::Gan);
    cfg.steps = 4;
    let full = run_gan_stage::<f32>(&cfg, &dataset, Stage2Inputs::default(), None).unwrap();
    let again = run_gan_stage::<f32>(&cfg, &dataset, Stage2Inputs::default(), None).unwrap();
    assert_eq!(full.generator.net.flat_params(), again.generator.net.flat_params());

    let mut half_cfg = cfg.clone();
    half_cfg.steps = 2;
    let half = run_gan_stage::<f32>(&half_cfg, &dataset, Stage2Inputs::default(), None).unwrap();
    let resumed = run_gan_stage::<f32>(&cfg, &dataset, Stage2Inputs::default(), Some(&half.state)).unwrap();
    assert_eq!(full.generator.net.flat_params(), resumed.generator.net.flat_params());
    assert_eq!(
        full.discriminator.net.flat_params(),
        resumed.discriminator.net.flat_params()
    );
}

#[test]
fn stage2_auxiliary_encoder_learns_in_the_prior_code_mode() {
    let dataset = tiny_dataset(64);
    let mut cfg = fast_stage2_config(StageTwoMode::InfoGan);
    cfg.lambda = 1.0;
    let mut init_cfg = cfg.clone();
    init_cfg.steps = 0;
    let init = run_gan_stage::<f32>(&init_cfg, &dataset, Stage2Inputs::default(), None).unwrap();
    let run = run_gan_stage::<f32>(&cfg, &dataset, Stage2Inputs::default(), None).unwrap();
    let p0 = init.state.params_of("encoder").unwrap();
    let p1 = run.state.params_of("encoder").unwrap();
    assert!(p0.iter().zip(p1.iter()).any(|(a, b)| a != b), "auxiliary encoder never moved");
    assert_eq!(run.curve.series("r_id").len(), 2);
}

#[test]
fn stage2_joint_mode_updates_encoder_and_decoder() {
    let dataset = tiny_dataset(64);
    let mut cfg = fast_stage2_config(StageTwoMode::IdGanE2e);
    cfg.steps = 1;
    let run = run_gan_stage::<f32>(&cfg, &dataset, Stage2Inputs::default(), None).unwrap();
    assert!(run.encoder.is_some());
    assert!(run.decoder.is_some());
    assert_eq!(run.curve.series("vae_total").len(), 1);
    assert_eq!(run.curve.series("r_id").len(), 1);
}

#[test]
fn stage2_conditional_mode_runs_with_paired_codes() {
    let dataset = tiny_dataset(64);
    let encoder = trained_encoder(&dataset);
    let mut cfg = fast_stage2_config(StageTwoMode::CGan);
    cfg.steps = 1;
    let run = run_gan_stage::<f32>(
        &cfg,
        &dataset,
        Stage2Inputs {
            encoder: Some(&encoder),
            decoder: None,
        },
        None,
    )
    .unwrap();
    assert!(run.curve.last("d_loss").unwrap().is_finite());
    assert!(run.curve.last("g_loss").unwrap().is_finite());
    // The conditional discriminator consumes image + code channels.
    assert_eq!(run.discriminator.spec.input_shape[0], 1 + cfg.c_dim);
}

#[test]
fn stage2_autoencoding_baseline_runs() {
    let dataset = tiny_dataset(64);
    let mut cfg = fast_stage2_config(StageTwoMode::VaeGan);
    cfg.steps = 2;
    let run = run_gan_stage::<f32>(&cfg, &dataset, Stage2Inputs::default(), None).unwrap();
    assert_eq!(run.curve.series("recon").len(), 2);
    assert!(run.curve.last("d_loss").unwrap().is_finite());
    let dec = run.decoder.unwrap();
    assert_eq!(run.generator.net.flat_params(), dec.net.flat_params());
}

#[test]
fn stage2_mismatched_code_width_is_rejected() {
    let dataset = tiny_dataset(64);
    let encoder = trained_encoder(&dataset); // c_dim = 4
    let mut cfg = fast_stage2_config(StageTwoMode::IdGan);
    cfg.c_dim = 6;
    let err = run_gan_stage::<f32>(
        &cfg,
        &dataset,
        Stage2Inputs {
            encoder: Some(&encoder),
            decoder: None,
        },
        None,
    )
    .err()
    .unwrap();
    assert!(matches!(err, Error::InvalidConfig(_)));
}

#[test]
fn stage2_residual_architecture_takes_a_step() {
    let dataset = tiny_dataset(64);
    let mut cfg = fast_stage2_config(StageTwoMode::Gan);
    cfg.arch = GanMode::Resnet;
    cfg.batch_size = 2;
    cfg.steps = 1;
    let run = run_gan_stage::<f32>(&cfg, &dataset, Stage2Inputs::default(), None).unwrap();
    assert!(run.curve.last("d_loss").unwrap().is_finite());
    assert!(run.curve.last("g_loss").unwrap().is_finite());
}

/// Longer adversarial smoke across seeds; slow on small hardware.
#[test]
#[ignore = "long-running stability check; run explicitly"]
fn stage2_long_run_stays_finite() {
    let dataset = tiny_dataset(64);
    let encoder = trained_encoder(&dataset);
    for seed in [1u64, 2, 3] {
        let cfg = GANStageConfig {
            steps: 200,
            batch_size: 16,
            seed,
            ..fast_stage2_config(StageTwoMode::IdGan)
        };
        let run = run_gan_stage::<f32>(
            &cfg,
            &dataset,
            Stage2Inputs {
                encoder: Some(&encoder),
                decoder: None,
            },
            None,
        )
        .unwrap();
        assert!(run.curve.series("g_loss").iter().all(|&(_, v)| v.is_finite()));
        assert!(run.curve.series("r_id").iter().all(|&(_, v)| v.is_finite()));
    }
}

// ----------------------------------------------------------- bookkeeping ---

#[test]
fn train_state_round_trips_through_json() {
    let state = TrainState {
        step: 42,
        params: vec![("generator".into(), vec![1.0f32, -2.5, 0.25])],
        opts: vec![(
            "generator".into(),
            crate::nn::AdamState {
                t: 7,
                m: vec![0.1, 0.2, 0.3],
                v: vec![0.4, 0.5, 0.6],
            },
        )],
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("state.json");
    state.save_json(&path).unwrap();
    let loaded = TrainState::load_json(&path).unwrap();
    assert_eq!(loaded.step, 42);
    assert_eq!(loaded.params_of("generator").unwrap(), &[1.0f32, -2.5, 0.25]);
    assert_eq!(loaded.opt_of("generator").unwrap().t, 7);
    assert!(loaded.params_of("missing").is_none());

    std::fs::write(&path, "not json").unwrap();
    assert!(TrainState::load_json(&path).is_err());
}

#[test]
fn loss_curve_csv_appends_with_single_header() {
    let mut curve = LossCurve::default();
    curve.push(0, "total", 1.5);
    curve.push(1, "total", 1.25);
    curve.push(1, "kl", 0.5);
    assert_eq!(curve.last("total"), Some(1.25));
    assert_eq!(curve.series("total").len(), 2);
    assert_eq!(curve.last("missing"), None);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curve.csv");
    curve.write_csv(&path).unwrap();
    curve.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,term,value");
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert_eq!(lines.iter().filter(|l| l.starts_with("step,")).count(), 1);
}

#[test]
fn stream_rng_separates_streams_and_steps() {
    use rand::RngCore;
    let a = stream_rng(7, 1, 0).next_u64();
    let b = stream_rng(7, 2, 0).next_u64();
    let c = stream_rng(7, 1, 1).next_u64();
    let d = stream_rng(7, 1, 0).next_u64();
    assert_ne!(a, b);
    assert_ne!(a, c);
    assert_eq!(a, d);
}

#[test]
fn batch_axis_shapes_are_consistent() {
    let dataset = tiny_dataset(64);
    let batch = dataset.batch::<f32>(&[0, 1]).unwrap();
    assert_eq!(batch.len_of(Axis(0)), 2);
    assert_eq!(batch.shape(), &[2, 1, 64, 64]);
}
