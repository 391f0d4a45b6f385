//! Differentiable training losses with hand-written gradients: the VAE
//! evidence bound, the total-correlation density-ratio penalty, the
//! information-distillation term, and the adversarial step.

use ndarray::{Array1, Array2, ArrayD, Axis, Ix2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::nets::NetworkHandle;
use crate::nn::{bilinear_resize, bilinear_resize_adjoint, Adam, Network, Scalar};
use crate::{Error, Result};

const LOG_2PI: f64 = 1.8378770664093453;

fn check_finite(value: f64, step: u64, term: &str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::TrainingDivergence {
            step,
            term: term.to_string(),
        })
    }
}

/// Mean-over-batch summed binary cross-entropy between targets in [0, 1] and
/// logits, with the gradient in the logits. Generic twin of the `f64` oracle
/// in [`crate::math`].
pub(crate) fn bernoulli_nll_grad<T: Scalar>(x: &ArrayD<T>, logits: &ArrayD<T>) -> Result<(f64, ArrayD<T>)> {
    if x.shape() != logits.shape() {
        return Err(Error::Shape(format!(
            "targets shape {:?} != logits shape {:?}",
            x.shape(),
            logits.shape()
        )));
    }
    let batch = x.len_of(Axis(0)) as f64;
    let mut loss = 0.0f64;
    let mut grad = ArrayD::<T>::zeros(logits.raw_dim());
    for ((g, &t), &l) in grad.iter_mut().zip(x.iter()).zip(logits.iter()) {
        let t = t.to_f64();
        let l = l.to_f64();
        let sp = if l > 0.0 { l + (-l).exp().ln_1p() } else { l.exp().ln_1p() };
        loss += sp - t * l;
        let sigma = 1.0 / (1.0 + (-l).exp());
        *g = T::from_f64((sigma - t) / batch);
    }
    Ok((loss / batch, grad))
}

/// Mean-over-batch KL(q(c|x) || N(0, I)) from per-sample mean and
/// log-variance, with gradients in both.
pub(crate) fn gaussian_kl_grad<T: Scalar>(
    mu: &Array2<T>,
    lv: &Array2<T>,
) -> (f64, Array2<T>, Array2<T>) {
    let n = mu.nrows() as f64;
    let mut kl = 0.0f64;
    let mut dmu = Array2::<T>::zeros(mu.raw_dim());
    let mut dlv = Array2::<T>::zeros(lv.raw_dim());
    for ((i, j), &m) in mu.indexed_iter() {
        let m = m.to_f64();
        let l = lv[[i, j]].to_f64();
        kl += 0.5 * (m * m + l.exp() - 1.0 - l);
        dmu[[i, j]] = T::from_f64(m / n);
        dlv[[i, j]] = T::from_f64(0.5 * (l.exp() - 1.0) / n);
    }
    (kl / n, dmu, dlv)
}

/// `-mean_n log N(c_n; mu_n, diag exp(lv_n))` with gradients in mu and lv.
pub(crate) fn gaussian_nll_grad<T: Scalar>(
    c: &Array2<T>,
    mu: &Array2<T>,
    lv: &Array2<T>,
) -> (f64, Array2<T>, Array2<T>) {
    let n = c.nrows() as f64;
    let mut loss = 0.0f64;
    let mut dmu = Array2::<T>::zeros(mu.raw_dim());
    let mut dlv = Array2::<T>::zeros(lv.raw_dim());
    for ((i, j), &cv) in c.indexed_iter() {
        let cv = cv.to_f64();
        let m = mu[[i, j]].to_f64();
        let l = lv[[i, j]].to_f64();
        let inv_var = (-l).exp();
        let d = cv - m;
        loss += 0.5 * (LOG_2PI + l + d * d * inv_var);
        dmu[[i, j]] = T::from_f64(-d * inv_var / n);
        dlv[[i, j]] = T::from_f64(0.5 * (1.0 - d * d * inv_var) / n);
    }
    (loss / n, dmu, dlv)
}

pub(crate) fn split_mean_logvar<T: Scalar>(out: &ArrayD<T>) -> Result<(Array2<T>, Array2<T>)> {
    let (mu, lv) = crate::nets::split_gaussian(out)?;
    Ok((mu, lv))
}

fn concat_grads<T: Scalar>(dmu: &Array2<T>, dlv: &Array2<T>) -> ArrayD<T> {
    let n = dmu.nrows();
    let c = dmu.ncols();
    let mut out = Array2::<T>::zeros((n, 2 * c));
    out.slice_mut(ndarray::s![.., ..c]).assign(dmu);
    out.slice_mut(ndarray::s![.., c..]).assign(dlv);
    out.into_dyn()
}

/// Everything a stage-1 step needs from one forward/backward pass.
pub(crate) struct VaeBackprop<T> {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
    pub tc_penalty: f64,
    pub enc_grad: Array1<T>,
    pub dec_grad: Array1<T>,
    /// Reparameterized latent sample (detached), for the TC discriminator.
    pub c: Array2<T>,
}

/// Forward and backward through encoder and decoder for
/// `recon_nll + beta * KL (+ gamma * TC penalty)`.
pub(crate) fn vae_backprop<T: Scalar>(
    encoder: &mut NetworkHandle<T>,
    decoder: &mut NetworkHandle<T>,
    batch: &ArrayD<T>,
    beta: f64,
    eps: &Array2<T>,
    tc: Option<(&mut NetworkHandle<T>, f64)>,
    step: u64,
) -> Result<VaeBackprop<T>> {
    let (enc_out, enc_tape) = encoder.forward_train(batch)?;
    let (mu, lv) = split_mean_logvar(&enc_out)?;
    if eps.raw_dim() != mu.raw_dim() {
        return Err(Error::Shape(format!(
            "noise shape {:?} != posterior shape {:?}",
            eps.shape(),
            mu.shape()
        )));
    }

    // c = mu + eps * exp(lv / 2)
    let half = T::from_f64(0.5);
    let std = lv.mapv(|l| (l * half).exp());
    let c = &mu + &(eps * &std);

    let (logits, dec_tape) = decoder.forward_train(&c.clone().into_dyn())?;
    let (recon, dlogits) = bernoulli_nll_grad(batch, &logits)?;
    let recon = check_finite(recon, step, "reconstruction")?;
    let (dc_dyn, dec_grad) = decoder.net.backward(&dec_tape, &dlogits);
    let mut dc = dc_dyn.into_dimensionality::<Ix2>().expect("decoder input is [N, c]");

    let (kl, dmu_kl, dlv_kl) = gaussian_kl_grad(&mu, &lv);
    let kl = check_finite(kl, step, "kl")?;

    let mut total = recon + beta * kl;
    let mut tc_penalty = 0.0;
    if let Some((tc_net, gamma)) = tc {
        let (pen, dc_tc) = tc_penalty_grad(&c, tc_net)?;
        tc_penalty = check_finite(pen, step, "tc-penalty")?;
        total += gamma * tc_penalty;
        dc = dc + dc_tc.mapv(|v| v * T::from_f64(gamma));
    }
    let total = check_finite(total, step, "total")?;

    let beta_t = T::from_f64(beta);
    let dmu = &dc + &dmu_kl.mapv(|v| v * beta_t);
    let dlv = &(&dc * eps * &std).mapv(|v| v * half) + &dlv_kl.mapv(|v| v * beta_t);
    let (_, enc_grad) = encoder.net.backward(&enc_tape, &concat_grads(&dmu, &dlv));

    Ok(VaeBackprop {
        total,
        recon,
        kl,
        tc_penalty,
        enc_grad,
        dec_grad,
        c,
    })
}

/// Shuffle each latent dimension independently across the batch, breaking
/// inter-dimension dependence while preserving marginals.
pub fn permute_latents<T: Scalar>(c: &Array2<T>, rng: &mut ChaCha8Rng) -> Result<Array2<T>> {
    let n = c.nrows();
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "dimension-wise permutation needs a batch of at least 2, got {n}"
        )));
    }
    let mut out = c.clone();
    for j in 0..c.ncols() {
        // Fisher-Yates over the column.
        for i in (1..n).rev() {
            let k = rng.gen_range(0..=i);
            let tmp = out[[i, j]];
            out[[i, j]] = out[[k, j]];
            out[[k, j]] = tmp;
        }
    }
    Ok(out)
}

/// Density-ratio estimate of total correlation: the mean difference between
/// the "joint" and "permuted" logits of the TC discriminator, with the
/// gradient in the latent batch (discriminator parameters held fixed).
fn tc_penalty_grad<T: Scalar>(
    c: &Array2<T>,
    tc: &mut NetworkHandle<T>,
) -> Result<(f64, Array2<T>)> {
    if c.nrows() < 2 {
        return Err(Error::InvalidInput(format!(
            "total-correlation penalty needs a batch of at least 2, got {}",
            c.nrows()
        )));
    }
    let n = c.nrows() as f64;
    let (logits, tape) = tc.forward_train(&c.clone().into_dyn())?;
    let l2 = logits.view().into_dimensionality::<Ix2>().unwrap();
    let penalty = l2
        .axis_iter(Axis(0))
        .map(|row| (row[0] - row[1]).to_f64())
        .sum::<f64>()
        / n;
    let mut dlogits = ArrayD::<T>::zeros(logits.raw_dim());
    {
        let mut d2 = dlogits.view_mut().into_dimensionality::<Ix2>().unwrap();
        let g = T::from_f64(1.0 / n);
        for mut row in d2.axis_iter_mut(Axis(0)) {
            row[0] = g;
            row[1] = T::zero() - g;
        }
    }
    let (dc, _) = tc.net.backward(&tape, &dlogits);
    Ok((penalty, dc.into_dimensionality::<Ix2>().expect("latent batch is [N, c]")))
}

/// Evaluation form of the total-correlation penalty.
pub fn factor_tc_penalty<T: Scalar>(c: &Array2<T>, tc: &mut NetworkHandle<T>) -> Result<f64> {
    tc_penalty_grad(c, tc).map(|(p, _)| p)
}

fn softmax2<T: Scalar>(row: ndarray::ArrayView1<'_, T>) -> (f64, f64) {
    let a = row[0].to_f64();
    let b = row[1].to_f64();
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    (ea / (ea + eb), eb / (ea + eb))
}

/// Two-class cross-entropy of the TC discriminator: joint samples labelled 0,
/// dimension-permuted samples labelled 1.
pub fn tc_discriminator_loss<T: Scalar>(
    c: &Array2<T>,
    c_permuted: &Array2<T>,
    tc: &mut NetworkHandle<T>,
) -> Result<f64> {
    tc_disc_grad(c, c_permuted, tc).map(|(l, _)| l)
}

/// Cross-entropy and the flat parameter gradient for one TC-discriminator
/// update.
pub(crate) fn tc_disc_grad<T: Scalar>(
    c: &Array2<T>,
    c_permuted: &Array2<T>,
    tc: &mut NetworkHandle<T>,
) -> Result<(f64, Array1<T>)> {
    if c.nrows() < 2 || c_permuted.nrows() < 2 {
        return Err(Error::InvalidInput("discriminator batches need at least 2 samples".into()));
    }
    let mut loss = 0.0f64;
    let mut grad: Option<Array1<T>> = None;
    for (batch, label) in [(c, 0usize), (c_permuted, 1usize)] {
        let n = batch.nrows() as f64;
        let (logits, tape) = tc.forward_train(&batch.clone().into_dyn())?;
        let l2 = logits.view().into_dimensionality::<Ix2>().unwrap();
        let mut dlogits = ArrayD::<T>::zeros(logits.raw_dim());
        {
            let mut d2 = dlogits.view_mut().into_dimensionality::<Ix2>().unwrap();
            for (i, row) in l2.axis_iter(Axis(0)).enumerate() {
                let (p0, p1) = softmax2(row);
                let p = [p0, p1];
                loss += -p[label].max(1e-300).ln() / (2.0 * n);
                d2[[i, 0]] = T::from_f64((p0 - if label == 0 { 1.0 } else { 0.0 }) / (2.0 * n));
                d2[[i, 1]] = T::from_f64((p1 - if label == 1 { 1.0 } else { 0.0 }) / (2.0 * n));
            }
        }
        let (_, g) = tc.net.backward(&tape, &dlogits);
        grad = Some(match grad {
            None => g,
            Some(acc) => acc + g,
        });
    }
    Ok((loss, grad.expect("two batches processed")))
}

/// Fraction of samples the TC discriminator classifies correctly.
pub fn tc_discriminator_accuracy<T: Scalar>(
    c: &Array2<T>,
    c_permuted: &Array2<T>,
    tc: &mut NetworkHandle<T>,
) -> Result<f64> {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (batch, label) in [(c, 0usize), (c_permuted, 1usize)] {
        let logits = tc.forward(&batch.clone().into_dyn())?;
        let l2 = logits.view().into_dimensionality::<Ix2>().unwrap();
        for row in l2.axis_iter(Axis(0)) {
            let pred = usize::from(row[1] > row[0]);
            correct += usize::from(pred == label);
            total += 1;
        }
    }
    Ok(correct as f64 / total as f64)
}

/// Information-distillation loss: `-mean log q(c | downsample(generated))`,
/// excluding the constant code entropy. The encoder is treated as fixed; the
/// returned gradient is with respect to the generated batch. When
/// `need_encoder_grad` is set (end-to-end and InfoGAN modes) the encoder's
/// parameter gradient is returned as well.
pub(crate) fn r_id_backprop<T: Scalar>(
    generated: &ArrayD<T>,
    c: &Array2<T>,
    encoder: &mut NetworkHandle<T>,
    need_encoder_grad: bool,
) -> Result<(f64, ArrayD<T>, Option<Array1<T>>)> {
    let enc_res = *encoder
        .spec
        .input_shape
        .last()
        .ok_or_else(|| Error::InvalidState("encoder has no input shape".into()))?;
    let gen_res = *generated
        .shape()
        .last()
        .ok_or_else(|| Error::Shape("generated batch has no spatial axis".into()))?;
    let bridged = if gen_res != enc_res {
        bilinear_resize(generated, enc_res, enc_res)?
    } else {
        generated.clone()
    };

    let (enc_out, tape) = encoder.forward_train(&bridged)?;
    let (mu, lv) = split_mean_logvar(&enc_out)?;
    if c.raw_dim() != mu.raw_dim() {
        return Err(Error::Shape(format!(
            "code batch {:?} does not match posterior {:?}",
            c.shape(),
            mu.shape()
        )));
    }
    let (loss, dmu, dlv) = gaussian_nll_grad(c, &mu, &lv);
    let (dx, enc_grad) = encoder.net.backward(&tape, &concat_grads(&dmu, &dlv));
    let dgen = if gen_res != enc_res {
        bilinear_resize_adjoint(&dx, gen_res, gen_res)?
    } else {
        dx
    };
    Ok((loss, dgen, need_encoder_grad.then_some(enc_grad)))
}

/// Evaluation form of the distillation loss.
pub fn r_id_loss<T: Scalar>(
    generated: &ArrayD<T>,
    c: &Array2<T>,
    encoder: &mut NetworkHandle<T>,
) -> Result<f64> {
    r_id_backprop(generated, c, encoder, false).map(|(l, _, _)| l)
}

/// Losses from one adversarial step.
#[derive(Debug, Clone, Copy)]
pub struct GanStepOutcome {
    pub d_loss: f64,
    pub g_loss: f64,
    /// Regularizer value, when a generator regularizer was supplied.
    pub reg_loss: Option<f64>,
}

/// `d(real/fake logit)` terms of the minimax discriminator loss and their
/// logit gradients.
pub(crate) fn d_loss_grads<T: Scalar>(
    real_logits: &ArrayD<T>,
    fake_logits: &ArrayD<T>,
) -> (f64, ArrayD<T>, ArrayD<T>) {
    let n_r = real_logits.len_of(Axis(0)) as f64;
    let n_f = fake_logits.len_of(Axis(0)) as f64;
    let mut loss = 0.0f64;
    // -mean log sigmoid(real): d/dl = (sigma(l) - 1) / n
    let dreal = real_logits.mapv(|l| {
        let l = l.to_f64();
        let sp = if l > 0.0 { (-l).exp().ln_1p() } else { -l + l.exp().ln_1p() };
        loss += sp / n_r;
        let sigma = 1.0 / (1.0 + (-l).exp());
        T::from_f64((sigma - 1.0) / n_r)
    });
    // -mean log(1 - sigmoid(fake)): d/dl = sigma(l) / n
    let dfake = fake_logits.mapv(|l| {
        let l = l.to_f64();
        let sp = if l > 0.0 { l + (-l).exp().ln_1p() } else { l.exp().ln_1p() };
        loss += sp / n_f;
        let sigma = 1.0 / (1.0 + (-l).exp());
        T::from_f64(sigma / n_f)
    });
    (loss, dreal, dfake)
}

/// Non-saturating generator loss `-mean log sigmoid(fake logit)` and its
/// logit gradient.
pub(crate) fn g_loss_grad<T: Scalar>(fake_logits: &ArrayD<T>) -> (f64, ArrayD<T>) {
    let n = fake_logits.len_of(Axis(0)) as f64;
    let mut loss = 0.0f64;
    let dfake = fake_logits.mapv(|l| {
        let l = l.to_f64();
        let sp = if l > 0.0 { (-l).exp().ln_1p() } else { -l + l.exp().ln_1p() };
        loss += sp / n;
        let sigma = 1.0 / (1.0 + (-l).exp());
        T::from_f64((sigma - 1.0) / n)
    });
    (loss, dfake)
}

/// One discriminator update on a real batch and a fake batch.
pub(crate) fn d_update<T: Scalar>(
    real: &ArrayD<T>,
    fake: &ArrayD<T>,
    d: &mut Network<T>,
    d_opt: &mut Adam<T>,
    step: u64,
) -> Result<f64> {
    let (real_logits, real_tape) = d.forward_train(real)?;
    let (fake_logits, fake_tape) = d.forward_train(fake)?;
    let (d_loss, dreal, dfake) = d_loss_grads(&real_logits, &fake_logits);
    let d_loss = check_finite(d_loss, step, "d_loss")?;
    let (_, g_r) = d.backward(&real_tape, &dreal);
    let (_, g_f) = d.backward(&fake_tape, &dfake);
    let grad = g_r + g_f;
    let mut params = d.flat_params();
    d_opt.step(&mut params, &grad);
    d.set_flat_params(&params)?;
    Ok(d_loss)
}

/// One generator update; `regularizer` may add an extra loss and gradient on
/// the generated batch (the distillation term, already weighted).
pub(crate) fn g_update<T: Scalar>(
    z: &ArrayD<T>,
    g: &mut Network<T>,
    d: &mut Network<T>,
    g_opt: &mut Adam<T>,
    mut regularizer: Option<&mut dyn FnMut(&ArrayD<T>) -> Result<(f64, ArrayD<T>)>>,
    step: u64,
) -> Result<(f64, Option<f64>)> {
    let (fake, g_tape) = g.forward_train(z)?;
    let (fake_logits, d_tape) = d.forward_train(&fake)?;
    let (g_loss, dlogits) = g_loss_grad(&fake_logits);
    let g_loss = check_finite(g_loss, step, "g_loss")?;
    let (mut dfake, _) = d.backward(&d_tape, &dlogits);
    let reg_loss = match regularizer.as_mut() {
        Some(reg) => {
            let (rl, dreg) = reg(&fake)?;
            let rl = check_finite(rl, step, "regularizer")?;
            dfake = dfake + dreg;
            Some(rl)
        }
        None => None,
    };
    let (_, grad) = g.backward(&g_tape, &dfake);
    let mut params = g.flat_params();
    g_opt.step(&mut params, &grad);
    g.set_flat_params(&params)?;
    Ok((g_loss, reg_loss))
}

/// One full adversarial step: a discriminator update on `(real, G(z_d))`
/// followed by a generator update on `z_g`.
#[allow(clippy::too_many_arguments)]
pub fn gan_step<T: Scalar>(
    real: &ArrayD<T>,
    z_d: &ArrayD<T>,
    z_g: &ArrayD<T>,
    g: &mut Network<T>,
    d: &mut Network<T>,
    g_opt: &mut Adam<T>,
    d_opt: &mut Adam<T>,
    regularizer: Option<&mut dyn FnMut(&ArrayD<T>) -> Result<(f64, ArrayD<T>)>>,
    step: u64,
) -> Result<GanStepOutcome> {
    let fake = g.forward(z_d, true)?;
    let d_loss = d_update(real, &fake, d, d_opt, step)?;
    let (g_loss, reg_loss) = g_update(z_g, g, d, g_opt, regularizer, step)?;
    Ok(GanStepOutcome {
        d_loss,
        g_loss,
        reg_loss,
    })
}

/// Sigmoid of a logit batch and the chain-rule factor `y * (1 - y)`.
pub(crate) fn sigmoid_with_grad<T: Scalar>(logits: &ArrayD<T>) -> (ArrayD<T>, ArrayD<T>) {
    let y = logits.mapv(|l| T::from_f64(1.0 / (1.0 + (-l.to_f64()).exp())));
    let dy = y.mapv(|v| v * (T::one() - v));
    (y, dy)
}

pub(crate) fn standard_normal_matrix<T: Scalar>(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<T> {
    use rand_distr::{Distribution, StandardNormal};
    Array2::from_shape_simple_fn((n, d), || {
        let v: f64 = StandardNormal.sample(rng);
        T::from_f64(v)
    })
}

