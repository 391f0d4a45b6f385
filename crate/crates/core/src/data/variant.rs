use ndarray::Array4;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{sample_rng, DatasetHandle, VariantConfig, VariantKind};
use crate::{Error, Result};

/// Sum of low-frequency sinusoids per channel: a smooth, colorful texture
/// standing in for a painted background.
struct ProceduralTexture {
    size: usize,
    /// Per channel: (fx, fy, phase, amplitude) per component.
    components: [Vec<(f64, f64, f64, f64)>; 3],
}

impl ProceduralTexture {
    fn new(size: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut components: [Vec<(f64, f64, f64, f64)>; 3] = Default::default();
        for channel in &mut components {
            for _ in 0..4 {
                channel.push((
                    rng.gen_range(0.5..3.0),
                    rng.gen_range(0.5..3.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                    rng.gen_range(0.1..0.25),
                ));
            }
        }
        ProceduralTexture { size, components }
    }

    fn sample(&self, channel: usize, x: usize, y: usize) -> u8 {
        let u = x as f64 / self.size as f64;
        let v = y as f64 / self.size as f64;
        let mut val = 0.5;
        for &(fx, fy, phase, amp) in &self.components[channel] {
            val += amp * (std::f64::consts::TAU * (fx * u + fy * v) + phase).sin();
        }
        (val.clamp(0.0, 1.0) * 255.0).round() as u8
    }
}

/// Decorate a plain binary sprite dataset. Deterministic given the config's
/// noise seed; the sprite's foreground support is preserved.
pub fn apply_variant(d: &DatasetHandle, v: VariantConfig) -> Result<DatasetHandle> {
    if d.variant.kind != VariantKind::Plain {
        return Err(Error::InvalidState(
            "variant decoration applied to an already-decorated dataset".into(),
        ));
    }
    if d.channels() != 1 {
        return Err(Error::InvalidState(format!(
            "plain sprites must be single-channel, got {} channels",
            d.channels()
        )));
    }
    if v.kind == VariantKind::Color && v.color_levels < 2 {
        return Err(Error::InvalidConfig(format!(
            "color variant needs at least 2 levels, got {}",
            v.color_levels
        )));
    }

    let (n, h, w) = (d.len(), d.resolution(), d.images.shape()[2]);
    let out_c = match v.kind {
        VariantKind::Plain => {
            return Ok(DatasetHandle {
                variant: v,
                ..d.clone()
            })
        }
        VariantKind::Noisy => 1,
        VariantKind::Color | VariantKind::ScreamLike => 3,
    };

    let texture = match v.kind {
        VariantKind::ScreamLike => Some(ProceduralTexture::new(
            2 * w.max(h),
            &mut sample_rng(v.noise_seed, usize::MAX),
        )),
        _ => None,
    };

    let src = d
        .images
        .as_slice()
        .ok_or_else(|| Error::InvalidState("dataset images are not contiguous".into()))?;
    let mut pixels = vec![0u8; n * h * w * out_c];
    pixels
        .par_chunks_mut(h * w * out_c)
        .enumerate()
        .for_each(|(i, img)| {
            let mask = &src[i * h * w..(i + 1) * h * w];
            let mut rng = sample_rng(v.noise_seed, i);
            match v.kind {
                VariantKind::Plain => unreachable!(),
                VariantKind::Color => {
                    let levels = v.color_levels as u64;
                    // Resample an all-black draw: it would erase the sprite.
                    let color = loop {
                        let c: [u64; 3] = [
                            rng.gen_range(0..levels),
                            rng.gen_range(0..levels),
                            rng.gen_range(0..levels),
                        ];
                        if c != [0, 0, 0] {
                            break c.map(|k| {
                                (k as f64 / (levels - 1) as f64 * 255.0).round() as u8
                            });
                        }
                    };
                    for (p, &m) in mask.iter().enumerate() {
                        if m > 0 {
                            img[p * 3..p * 3 + 3].copy_from_slice(&color);
                        }
                    }
                }
                VariantKind::Noisy => {
                    for (p, &m) in mask.iter().enumerate() {
                        img[p] = if m > 0 { m } else { rng.gen_range(0..=255u8) };
                    }
                }
                VariantKind::ScreamLike => {
                    let tex = texture.as_ref().expect("texture built for this kind");
                    let ox = rng.gen_range(0..tex.size - w);
                    let oy = rng.gen_range(0..tex.size - h);
                    for r in 0..h {
                        for c in 0..w {
                            let p = r * w + c;
                            for ch in 0..3 {
                                let t = tex.sample(ch, ox + c, oy + r);
                                // Sprite pixels take the inverted patch color.
                                img[p * 3 + ch] = if mask[p] > 0 { 255 - t } else { t };
                            }
                        }
                    }
                }
            }
        });

    let images = Array4::from_shape_vec((n, h, w, out_c), pixels).expect("buffer matches shape");
    Ok(DatasetHandle {
        factor_space: d.factor_space.clone(),
        images,
        factor_table: d.factor_table.clone(),
        variant: v,
    })
}
