//! Stage 2: adversarial generator training on `z = (s, c)`, with the
//! distillation regularizer tying the generated images back to a stage-1
//! encoder, plus the baseline and ablation modes.

use ndarray::{s, Array1, Array2, ArrayD, Ix2, Ix4};
use rand_chacha::ChaCha8Rng;

use crate::data::DatasetHandle;
use crate::nets::{build_decoder, build_encoder, build_gan_pair, GanMode, NetworkHandle};
use crate::nn::{Adam, Scalar};
use crate::{Error, Result};

use super::losses::{
    d_loss_grads, d_update, g_loss_grad, g_update, gaussian_kl_grad, r_id_backprop,
    standard_normal_matrix, vae_backprop,
};
use super::sampling::{compose_z, LatentCode};
use super::stage1::{STREAM_DATA, STREAM_EPS, STREAM_INIT};
use super::{stream_rng, LossCurve, TrainState};

const STREAM_S: u64 = 4;
const STREAM_C: u64 = 5;
const STREAM_D_EXTRA: u64 = 6;

/// Stage-2 training modes: the distillation method, its ablations, and the
/// baselines it is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageTwoMode {
    /// Frozen stage-1 encoder; codes from the aggregated posterior; the
    /// generator loss carries the lambda-weighted distillation term.
    IdGan,
    /// Same code source as [`StageTwoMode::IdGan`] but no distillation term.
    IdGanNoDistill,
    /// Joint training: the VAE objective keeps updating encoder and decoder
    /// while the generator trains with the distillation term.
    IdGanE2e,
    /// Unconditional baseline: the whole latent is a standard-normal draw.
    Gan,
    /// Codes from the prior; a freshly initialized auxiliary encoder is
    /// trained by the same distillation term instead of a stage-1 encoder.
    InfoGan,
    /// Conditional baseline: the discriminator sees the image concatenated
    /// with a spatial broadcast of the code.
    CGan,
    /// Autoencoding baseline: the stage-1 style VAE trained with an extra
    /// adversarial loss on its (sigmoid) reconstructions.
    VaeGan,
}

impl StageTwoMode {
    /// Whether the mode needs a trained stage-1 encoder as input.
    pub fn needs_encoder(self) -> bool {
        matches!(self, StageTwoMode::IdGan | StageTwoMode::IdGanNoDistill | StageTwoMode::CGan)
    }
}

/// Configuration for one stage-2 run.
#[derive(Debug, Clone)]
pub struct GANStageConfig {
    pub mode: StageTwoMode,
    /// Distillation weight; must lie in `[0, 10]`.
    pub lambda: f64,
    /// KL weight for the modes that keep a VAE objective running.
    pub beta: f64,
    pub c_dim: usize,
    pub s_dim: usize,
    pub steps: u64,
    pub batch_size: usize,
    pub g_lr: f64,
    pub d_lr: f64,
    /// Discriminator updates per generator update.
    pub d_steps_per_g: u32,
    pub seed: u64,
    pub arch: GanMode,
}

impl Default for GANStageConfig {
    fn default() -> Self {
        GANStageConfig {
            mode: StageTwoMode::IdGan,
            lambda: 0.1,
            beta: 1.0,
            c_dim: 10,
            s_dim: 10,
            steps: 1,
            batch_size: 64,
            g_lr: 1e-4,
            d_lr: 4e-4,
            d_steps_per_g: 1,
            seed: 0,
            arch: GanMode::Mirror,
        }
    }
}

impl GANStageConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=10.0).contains(&self.lambda) {
            return Err(Error::InvalidConfig(format!(
                "lambda must lie in [0, 10], got {}",
                self.lambda
            )));
        }
        if self.c_dim == 0 {
            return Err(Error::InvalidConfig("c_dim must be at least 1".into()));
        }
        if self.mode != StageTwoMode::VaeGan && self.s_dim == 0 {
            return Err(Error::InvalidConfig("s_dim must be at least 1".into()));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig("batch_size must be at least 2".into()));
        }
        if self.d_steps_per_g == 0 {
            return Err(Error::InvalidConfig("d_steps_per_g must be at least 1".into()));
        }
        if !(self.g_lr > 0.0) || !(self.d_lr > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidConfig(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if self.mode == StageTwoMode::VaeGan && self.arch != GanMode::Mirror {
            return Err(Error::InvalidConfig(
                "the autoencoding baseline reconstructs in [0, 1] and only supports the mirror discriminator".into(),
            ));
        }
        Ok(())
    }
}

/// Pretrained stage-1 networks handed to a stage-2 run.
pub struct Stage2Inputs<'a, T: Scalar> {
    pub encoder: Option<&'a NetworkHandle<T>>,
    pub decoder: Option<&'a NetworkHandle<T>>,
}

impl<'a, T: Scalar> Default for Stage2Inputs<'a, T> {
    fn default() -> Self {
        Stage2Inputs {
            encoder: None,
            decoder: None,
        }
    }
}

/// The artifacts of a stage-2 run.
pub struct Stage2Run<T: Scalar> {
    pub generator: NetworkHandle<T>,
    pub discriminator: NetworkHandle<T>,
    /// The encoder as used by the run: frozen copies are returned unchanged,
    /// jointly trained and auxiliary encoders reflect their updates.
    pub encoder: Option<NetworkHandle<T>>,
    pub decoder: Option<NetworkHandle<T>>,
    pub curve: LossCurve,
    pub state: TrainState,
}

/// Broadcast each code over the spatial grid and append it to the image
/// channels: `[N, C, H, W] + [N, K] -> [N, C + K, H, W]`.
fn broadcast_concat<T: Scalar>(images: &ArrayD<T>, codes: &Array2<T>) -> Result<ArrayD<T>> {
    let x = images
        .view()
        .into_dimensionality::<Ix4>()
        .map_err(|_| Error::Shape(format!("expected an image batch, got {:?}", images.shape())))?;
    let (n, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    if codes.nrows() != n {
        return Err(Error::Shape(format!(
            "code batch {} does not match image batch {}",
            codes.nrows(),
            n
        )));
    }
    let k = codes.ncols();
    let mut out = ndarray::Array4::<T>::zeros((n, c + k, h, w));
    out.slice_mut(s![.., ..c, .., ..]).assign(&x);
    for i in 0..n {
        for j in 0..k {
            out.slice_mut(s![i, c + j, .., ..]).fill(codes[[i, j]]);
        }
    }
    Ok(out.into_dyn())
}

/// Keep only the image-channel part of a gradient through
/// [`broadcast_concat`].
fn image_part<T: Scalar>(grad: &ArrayD<T>, image_channels: usize) -> ArrayD<T> {
    let g = grad.view().into_dimensionality::<Ix4>().expect("concat gradient is 4-D");
    g.slice(s![.., ..image_channels, .., ..]).to_owned().into_dyn()
}

/// Map dataset images into the discriminator's input range.
fn to_gan_range<T: Scalar>(images: &ArrayD<T>, arch: GanMode) -> ArrayD<T> {
    match arch {
        GanMode::Mirror => images.clone(),
        GanMode::Resnet => images.mapv(|v| v + v - T::one()),
    }
}

/// Map generator output into `[0, 1]` image space, returning the constant
/// chain-rule factor of that map.
fn to_image_range<T: Scalar>(fake: &ArrayD<T>, arch: GanMode) -> (ArrayD<T>, f64) {
    match arch {
        GanMode::Mirror => (fake.clone(), 1.0),
        GanMode::Resnet => (fake.mapv(|v| (v + T::one()) * T::from_f64(0.5)), 0.5),
    }
}

/// Encode a batch of dataset images and draw one posterior sample per image.
fn posterior_sample<T: Scalar>(
    encoder: &mut NetworkHandle<T>,
    images: &ArrayD<T>,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<T>> {
    let enc_out = encoder.forward(images)?;
    let (mu, lv) = crate::nets::split_gaussian(&enc_out)?;
    let eps = standard_normal_matrix::<T>(mu.nrows(), mu.ncols(), rng);
    let half = T::from_f64(0.5);
    Ok(&mu + &(&eps * &lv.mapv(|l| (l * half).exp())))
}

/// Draw the code part of the generator latent for one step.
fn draw_code<T: Scalar>(
    mode: StageTwoMode,
    encoder: Option<&mut NetworkHandle<T>>,
    dataset: &DatasetHandle,
    n: usize,
    c_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<T>> {
    match mode {
        StageTwoMode::Gan | StageTwoMode::InfoGan => Ok(standard_normal_matrix(n, c_dim, rng)),
        _ => {
            use rand::Rng;
            let encoder = encoder
                .ok_or_else(|| Error::InvalidConfig("this mode needs an encoder for code sampling".into()))?;
            let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..dataset.len())).collect();
            let images = dataset.batch::<T>(&indices)?;
            posterior_sample(encoder, &images, rng)
        }
    }
}

fn sample_real<T: Scalar>(
    dataset: &DatasetHandle,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ArrayD<T>> {
    use rand::Rng;
    let indices: Vec<usize> = (0..n).map(|_| rng.gen_range(0..dataset.len())).collect();
    dataset.batch::<T>(&indices)
}

fn apply_update<T: Scalar>(net: &mut NetworkHandle<T>, opt: &mut Adam<T>, grad: &Array1<T>) -> Result<()> {
    let mut p = net.net.flat_params();
    opt.step(&mut p, grad);
    net.net.set_flat_params(&p)
}

struct Parts<'a, T: Scalar> {
    named: Vec<(&'static str, &'a NetworkHandle<T>, &'a Adam<T>)>,
}

impl<'a, T: Scalar> Parts<'a, T> {
    fn capture(&self, step: u64) -> TrainState {
        TrainState {
            step,
            params: self
                .named
                .iter()
                .map(|(name, net, _)| {
                    (
                        name.to_string(),
                        net.net.flat_params().iter().map(|&v| Scalar::to_f64(v) as f32).collect(),
                    )
                })
                .collect(),
            opts: self
                .named
                .iter()
                .map(|(name, _, opt)| (name.to_string(), opt.state()))
                .collect(),
        }
    }
}

fn restore_part<T: Scalar>(
    state: &TrainState,
    name: &str,
    net: &mut NetworkHandle<T>,
    opt: &mut Adam<T>,
) -> Result<()> {
    let params = state
        .params_of(name)
        .ok_or_else(|| Error::InvalidState(format!("resume state has no parameters for `{name}`")))?;
    let flat = Array1::from_iter(params.iter().map(|&v| T::from_f64(v as f64)));
    net.net.set_flat_params(&flat)?;
    let opt_state = state
        .opt_of(name)
        .ok_or_else(|| Error::InvalidState(format!("resume state has no optimizer for `{name}`")))?;
    opt.restore(opt_state);
    Ok(())
}

/// Train a stage-2 model. Frozen-encoder modes leave the supplied encoder's
/// parameters bit-identical; `resume` continues a saved run byte-for-byte.
pub fn run_gan_stage<T: Scalar>(
    cfg: &GANStageConfig,
    dataset: &DatasetHandle,
    inputs: Stage2Inputs<'_, T>,
    resume: Option<&TrainState>,
) -> Result<Stage2Run<T>> {
    cfg.validate()?;
    if dataset.len() == 0 {
        return Err(Error::InvalidInput("stage-2 training needs a non-empty dataset".into()));
    }
    if cfg.mode.needs_encoder() && inputs.encoder.is_none() {
        return Err(Error::InvalidConfig(format!(
            "{:?} requires a trained encoder input",
            cfg.mode
        )));
    }
    if let Some(enc) = inputs.encoder {
        if enc.spec.c_dim != cfg.c_dim {
            return Err(Error::InvalidConfig(format!(
                "encoder code width {} does not match configured c_dim {}",
                enc.spec.c_dim, cfg.c_dim
            )));
        }
    }

    if cfg.mode == StageTwoMode::VaeGan {
        return run_vaegan(cfg, dataset, inputs, resume);
    }

    let resolution = dataset.resolution();
    let channels = dataset.channels();
    let z_dim = cfg.s_dim + cfg.c_dim;
    let mut init_rng = stream_rng(cfg.seed, STREAM_INIT, 0);
    let (mut generator, mut discriminator) = if cfg.mode == StageTwoMode::CGan {
        let (g, _) = build_gan_pair::<T>(cfg.arch, z_dim, resolution, channels, &mut init_rng)?;
        let (_, d) = build_gan_pair::<T>(cfg.arch, z_dim, resolution, channels + cfg.c_dim, &mut init_rng)?;
        (g, d)
    } else {
        build_gan_pair::<T>(cfg.arch, z_dim, resolution, channels, &mut init_rng)?
    };

    // The encoder a run trains or samples through. Frozen modes clone the
    // input and never update it; the auxiliary and joint modes train it.
    let mut encoder: Option<NetworkHandle<T>> = match cfg.mode {
        StageTwoMode::InfoGan => Some(build_encoder::<T>(cfg.c_dim, channels, &mut init_rng)?),
        StageTwoMode::IdGanE2e => Some(match inputs.encoder {
            Some(e) => e.clone(),
            None => build_encoder::<T>(cfg.c_dim, channels, &mut init_rng)?,
        }),
        _ => inputs.encoder.cloned(),
    };
    let mut decoder: Option<NetworkHandle<T>> = if cfg.mode == StageTwoMode::IdGanE2e {
        Some(match inputs.decoder {
            Some(d) => d.clone(),
            None => build_decoder::<T>(cfg.c_dim, channels, &mut init_rng)?,
        })
    } else {
        inputs.decoder.cloned()
    };

    let mut g_opt = Adam::<T>::new(generator.net.flat_params().len(), cfg.g_lr, 0.5, 0.999);
    let mut d_opt = Adam::<T>::new(discriminator.net.flat_params().len(), cfg.d_lr, 0.5, 0.999);
    let trains_encoder = matches!(cfg.mode, StageTwoMode::InfoGan | StageTwoMode::IdGanE2e);
    let mut enc_opt = if trains_encoder {
        encoder
            .as_ref()
            .map(|e| Adam::<T>::new(e.net.flat_params().len(), 1e-4, 0.9, 0.999))
    } else {
        None
    };
    let mut dec_opt = if cfg.mode == StageTwoMode::IdGanE2e {
        decoder
            .as_ref()
            .map(|d| Adam::<T>::new(d.net.flat_params().len(), 1e-4, 0.9, 0.999))
    } else {
        None
    };

    let mut start_step = 0u64;
    if let Some(state) = resume {
        restore_part(state, "generator", &mut generator, &mut g_opt)?;
        restore_part(state, "discriminator", &mut discriminator, &mut d_opt)?;
        if trains_encoder {
            if let (Some(e), Some(opt)) = (encoder.as_mut(), enc_opt.as_mut()) {
                restore_part(state, "encoder", e, opt)?;
            }
        }
        if let (Some(d), Some(opt)) = (decoder.as_mut(), dec_opt.as_mut()) {
            restore_part(state, "decoder", d, opt)?;
        }
        start_step = state.step;
    }

    let distills = matches!(
        cfg.mode,
        StageTwoMode::IdGan | StageTwoMode::IdGanE2e | StageTwoMode::InfoGan
    ) && cfg.lambda > 0.0;

    let mut curve = LossCurve::default();
    for step in start_step..cfg.steps {
        let mut data_rng = stream_rng(cfg.seed, STREAM_DATA, step);
        let mut s_rng = stream_rng(cfg.seed, STREAM_S, step);
        let mut c_rng = stream_rng(cfg.seed, STREAM_C, step);

        // Joint VAE update first, so the distillation term sees the same-step
        // encoder the code was drawn from.
        if cfg.mode == StageTwoMode::IdGanE2e {
            let (enc, dec) = (encoder.as_mut().unwrap(), decoder.as_mut().unwrap());
            let batch = sample_real::<T>(dataset, cfg.batch_size, &mut data_rng)?;
            let mut eps_rng = stream_rng(cfg.seed, STREAM_EPS, step);
            let eps = standard_normal_matrix::<T>(cfg.batch_size, cfg.c_dim, &mut eps_rng);
            let out = vae_backprop(enc, dec, &batch, cfg.beta, &eps, None, step)?;
            apply_update(enc, enc_opt.as_mut().unwrap(), &out.enc_grad)?;
            apply_update(dec, dec_opt.as_mut().unwrap(), &out.dec_grad)?;
            curve.push(step, "vae_total", out.total);
        }

        // Extra discriminator updates before the shared D+G step.
        for extra in 1..cfg.d_steps_per_g {
            let mut extra_rng = stream_rng(cfg.seed, STREAM_D_EXTRA + u64::from(extra), step);
            let real = to_gan_range(&sample_real::<T>(dataset, cfg.batch_size, &mut extra_rng)?, cfg.arch);
            let code = LatentCode {
                s: standard_normal_matrix(cfg.batch_size, cfg.s_dim, &mut extra_rng),
                c: draw_code(cfg.mode, encoder.as_mut(), dataset, cfg.batch_size, cfg.c_dim, &mut extra_rng)?,
            };
            let fake = generator.net.forward(&compose_z(&code)?, true)?;
            if cfg.mode == StageTwoMode::CGan {
                let enc = encoder.as_mut().unwrap();
                let real_imgs = sample_real::<T>(dataset, cfg.batch_size, &mut extra_rng)?;
                let real_c = posterior_sample(enc, &real_imgs, &mut extra_rng)?;
                let real_in = broadcast_concat(&to_gan_range(&real_imgs, cfg.arch), &real_c)?;
                let fake_in = broadcast_concat(&fake, &code.c)?;
                d_update(&real_in, &fake_in, &mut discriminator.net, &mut d_opt, step)?;
            } else {
                d_update(&real, &fake, &mut discriminator.net, &mut d_opt, step)?;
            }
        }

        let code_d = LatentCode {
            s: standard_normal_matrix(cfg.batch_size, cfg.s_dim, &mut s_rng),
            c: draw_code(cfg.mode, encoder.as_mut(), dataset, cfg.batch_size, cfg.c_dim, &mut c_rng)?,
        };
        let code_g = LatentCode {
            s: standard_normal_matrix(cfg.batch_size, cfg.s_dim, &mut s_rng),
            c: draw_code(cfg.mode, encoder.as_mut(), dataset, cfg.batch_size, cfg.c_dim, &mut c_rng)?,
        };
        let z_d = compose_z(&code_d)?;
        let z_g = compose_z(&code_g)?;

        if cfg.mode == StageTwoMode::CGan {
            let (d_loss, g_loss) = cgan_step(
                cfg,
                dataset,
                &mut generator,
                &mut discriminator,
                encoder.as_mut().unwrap(),
                &mut g_opt,
                &mut d_opt,
                &code_d,
                &code_g,
                &mut data_rng,
                step,
            )?;
            curve.push(step, "d_loss", d_loss);
            curve.push(step, "g_loss", g_loss);
        } else {
            let real = to_gan_range(&sample_real::<T>(dataset, cfg.batch_size, &mut data_rng)?, cfg.arch);
            let fake_d = generator.net.forward(&z_d, true)?;
            let d_loss = d_update(&real, &fake_d, &mut discriminator.net, &mut d_opt, step)?;

            let mut enc_grad_stash: Option<Array1<T>> = None;
            let (g_loss, reg_loss) = if distills {
                let enc = encoder.as_mut().unwrap();
                let lambda = T::from_f64(cfg.lambda);
                let c_target = code_g.c.clone();
                let arch = cfg.arch;
                let want_enc_grad = trains_encoder;
                let stash = &mut enc_grad_stash;
                let mut reg = |fake: &ArrayD<T>| -> Result<(f64, ArrayD<T>)> {
                    let (images, chain) = to_image_range(fake, arch);
                    let (loss, dimg, enc_grad) = r_id_backprop(&images, &c_target, enc, want_enc_grad)?;
                    if let Some(g) = enc_grad {
                        *stash = Some(g.mapv(|v| v * lambda));
                    }
                    let factor = lambda * T::from_f64(chain);
                    Ok((cfg.lambda * loss, dimg.mapv(|v| v * factor)))
                };
                g_update(&z_g, &mut generator.net, &mut discriminator.net, &mut g_opt, Some(&mut reg), step)?
            } else {
                g_update(&z_g, &mut generator.net, &mut discriminator.net, &mut g_opt, None, step)?
            };
            if let Some(grad) = enc_grad_stash {
                apply_update(encoder.as_mut().unwrap(), enc_opt.as_mut().unwrap(), &grad)?;
            }

            curve.push(step, "d_loss", d_loss);
            curve.push(step, "g_loss", g_loss);
            if let Some(r) = reg_loss {
                curve.push(step, "r_id", r);
            }
        }
    }

    let mut parts = Parts {
        named: vec![("generator", &generator, &g_opt), ("discriminator", &discriminator, &d_opt)],
    };
    if trains_encoder {
        if let (Some(e), Some(opt)) = (encoder.as_ref(), enc_opt.as_ref()) {
            parts.named.push(("encoder", e, opt));
        }
    }
    if let (Some(d), Some(opt)) = (decoder.as_ref(), dec_opt.as_ref()) {
        parts.named.push(("decoder", d, opt));
    }
    let state = parts.capture(cfg.steps.max(start_step));

    Ok(Stage2Run {
        generator,
        discriminator,
        encoder,
        decoder,
        curve,
        state,
    })
}

/// One conditional step: the discriminator judges images concatenated with a
/// spatial broadcast of their code; real images pair with a posterior sample
/// of their own code, fakes pair with the code they were generated from.
#[allow(clippy::too_many_arguments)]
fn cgan_step<T: Scalar>(
    cfg: &GANStageConfig,
    dataset: &DatasetHandle,
    generator: &mut NetworkHandle<T>,
    discriminator: &mut NetworkHandle<T>,
    encoder: &mut NetworkHandle<T>,
    g_opt: &mut Adam<T>,
    d_opt: &mut Adam<T>,
    code_d: &LatentCode<T>,
    code_g: &LatentCode<T>,
    data_rng: &mut ChaCha8Rng,
    step: u64,
) -> Result<(f64, f64)> {
    let channels = dataset.channels();

    let real_imgs = sample_real::<T>(dataset, cfg.batch_size, data_rng)?;
    let real_c = posterior_sample(encoder, &real_imgs, data_rng)?;
    let real_in = broadcast_concat(&to_gan_range(&real_imgs, cfg.arch), &real_c)?;
    let fake_d = generator.net.forward(&compose_z(code_d)?, true)?;
    let fake_in = broadcast_concat(&fake_d, &code_d.c)?;
    let d_loss = d_update(&real_in, &fake_in, &mut discriminator.net, d_opt, step)?;

    let (fake_g, g_tape) = generator.net.forward_train(&compose_z(code_g)?)?;
    let fake_g_in = broadcast_concat(&fake_g, &code_g.c)?;
    let (logits, d_tape) = discriminator.net.forward_train(&fake_g_in)?;
    let (g_loss, dlogits) = g_loss_grad(&logits);
    if !g_loss.is_finite() {
        return Err(Error::TrainingDivergence {
            step,
            term: "g_loss".into(),
        });
    }
    let (dconcat, _) = discriminator.net.backward(&d_tape, &dlogits);
    let dfake = image_part(&dconcat, channels);
    let (_, grad) = generator.net.backward(&g_tape, &dfake);
    apply_update(generator, g_opt, &grad)?;
    Ok((d_loss, g_loss))
}

/// The autoencoding baseline: a beta-weighted VAE whose sigmoid
/// reconstructions also fool a discriminator, with the adversarial term
/// weighted by `lambda`.
fn run_vaegan<T: Scalar>(
    cfg: &GANStageConfig,
    dataset: &DatasetHandle,
    inputs: Stage2Inputs<'_, T>,
    resume: Option<&TrainState>,
) -> Result<Stage2Run<T>> {
    if dataset.resolution() != 64 {
        return Err(Error::InvalidConfig(format!(
            "the autoencoding baseline expects 64x64 inputs, dataset is {0}x{0}",
            dataset.resolution()
        )));
    }
    let channels = dataset.channels();
    let mut init_rng = stream_rng(cfg.seed, STREAM_INIT, 0);
    let mut encoder = match inputs.encoder {
        Some(e) => e.clone(),
        None => build_encoder::<T>(cfg.c_dim, channels, &mut init_rng)?,
    };
    let mut decoder = match inputs.decoder {
        Some(d) => d.clone(),
        None => build_decoder::<T>(cfg.c_dim, channels, &mut init_rng)?,
    };
    let z_dim = cfg.s_dim.max(1) + cfg.c_dim;
    let (_, mut discriminator) =
        build_gan_pair::<T>(GanMode::Mirror, z_dim, 64, channels, &mut init_rng)?;

    let mut enc_opt = Adam::<T>::new(encoder.net.flat_params().len(), cfg.g_lr, 0.9, 0.999);
    let mut dec_opt = Adam::<T>::new(decoder.net.flat_params().len(), cfg.g_lr, 0.9, 0.999);
    let mut d_opt = Adam::<T>::new(discriminator.net.flat_params().len(), cfg.d_lr, 0.5, 0.999);

    let mut start_step = 0u64;
    if let Some(state) = resume {
        restore_part(state, "encoder", &mut encoder, &mut enc_opt)?;
        restore_part(state, "generator", &mut decoder, &mut dec_opt)?;
        restore_part(state, "discriminator", &mut discriminator, &mut d_opt)?;
        start_step = state.step;
    }

    let half = T::from_f64(0.5);
    let mut curve = LossCurve::default();
    for step in start_step..cfg.steps {
        let mut data_rng = stream_rng(cfg.seed, STREAM_DATA, step);
        let batch = sample_real::<T>(dataset, cfg.batch_size, &mut data_rng)?;
        let mut eps_rng = stream_rng(cfg.seed, STREAM_EPS, step);
        let eps = standard_normal_matrix::<T>(cfg.batch_size, cfg.c_dim, &mut eps_rng);

        let (enc_out, enc_tape) = encoder.forward_train(&batch)?;
        let (mu, lv) = crate::nets::split_gaussian(&enc_out)?;
        let std = lv.mapv(|l| (l * half).exp());
        let c = &mu + &(&eps * &std);
        let (logits, dec_tape) = decoder.forward_train(&c.clone().into_dyn())?;
        let (recon_img, sig_grad) = super::losses::sigmoid_with_grad(&logits);

        // Discriminator update on real vs detached reconstructions.
        let (real_logits, real_tape) = discriminator.net.forward_train(&batch)?;
        let (fake_logits, fake_tape) = discriminator.net.forward_train(&recon_img)?;
        let (d_loss, dreal, dfake) = d_loss_grads(&real_logits, &fake_logits);
        if !d_loss.is_finite() {
            return Err(Error::TrainingDivergence {
                step,
                term: "d_loss".into(),
            });
        }
        let (_, dg_r) = discriminator.net.backward(&real_tape, &dreal);
        let (_, dg_f) = discriminator.net.backward(&fake_tape, &dfake);
        let d_grad = dg_r + dg_f;
        apply_update(&mut discriminator, &mut d_opt, &d_grad)?;

        // Autoencoder update: reconstruction + beta*KL + lambda*adversarial.
        let (recon, dlogits_rec) = super::losses::bernoulli_nll_grad(&batch, &logits)?;
        let (kl, dmu_kl, dlv_kl) = gaussian_kl_grad(&mu, &lv);
        let (adv_logits, adv_tape) = discriminator.net.forward_train(&recon_img)?;
        let (g_loss, dadv_logits) = g_loss_grad(&adv_logits);
        let total = recon + cfg.beta * kl + cfg.lambda * g_loss;
        if !total.is_finite() {
            return Err(Error::TrainingDivergence {
                step,
                term: "total".into(),
            });
        }
        let (dimg, _) = discriminator.net.backward(&adv_tape, &dadv_logits);
        let lambda = T::from_f64(cfg.lambda);
        let dlogits = &dlogits_rec + &(&dimg * &sig_grad).mapv(|v| v * lambda);
        let (dc_dyn, dec_grad) = decoder.net.backward(&dec_tape, &dlogits);
        let dc = dc_dyn.into_dimensionality::<Ix2>().expect("decoder input is [N, c]");
        let beta_t = T::from_f64(cfg.beta);
        let dmu = &dc + &dmu_kl.mapv(|v| v * beta_t);
        let dlv = &(&dc * &eps * &std).mapv(|v| v * half) + &dlv_kl.mapv(|v| v * beta_t);
        let n = dmu.nrows();
        let k = dmu.ncols();
        let mut denc = Array2::<T>::zeros((n, 2 * k));
        denc.slice_mut(s![.., ..k]).assign(&dmu);
        denc.slice_mut(s![.., k..]).assign(&dlv);
        let (_, enc_grad) = encoder.net.backward(&enc_tape, &denc.into_dyn());
        apply_update(&mut decoder, &mut dec_opt, &dec_grad)?;
        apply_update(&mut encoder, &mut enc_opt, &enc_grad)?;

        curve.push(step, "d_loss", d_loss);
        curve.push(step, "g_loss", g_loss);
        curve.push(step, "recon", recon);
        curve.push(step, "kl", kl);
    }

    let parts = Parts {
        named: vec![
            ("generator", &decoder, &dec_opt),
            ("discriminator", &discriminator, &d_opt),
            ("encoder", &encoder, &enc_opt),
        ],
    };
    let state = parts.capture(cfg.steps.max(start_step));

    Ok(Stage2Run {
        generator: decoder.clone(),
        discriminator,
        encoder: Some(encoder),
        decoder: Some(decoder),
        curve,
        state,
    })
}
