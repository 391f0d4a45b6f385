use ndarray::{Array2, Array4};
use rayon::prelude::*;

use super::{DatasetHandle, FactorSpace, VariantConfig};
use crate::{Error, Result};

/// Fraction of the image width occupied by a sprite's half-extent at scale 1.
const SIZE_FRACTION: f64 = 0.15;
/// Sub-samples per pixel axis for the supersampled rasterizer.
const SUPERSAMPLE: usize = 4;

fn inside(shape: usize, u: f64, v: f64) -> bool {
    match shape {
        // Square filling most of the unit box.
        0 => u.abs() <= 0.8 && v.abs() <= 0.8,
        // Ellipse, wider than tall so orientation is visible.
        1 => (u / 0.9).powi(2) + (v / 0.55).powi(2) <= 1.0,
        // Heart via the standard implicit sextic, upright in image space
        // (image rows grow downward, hence the sign flip on v).
        2 => {
            let x = 1.25 * u;
            let y = -1.25 * v;
            let a = x * x + y * y - 1.0;
            a * a * a - x * x * y * y * y <= 0.0
        }
        _ => false,
    }
}

/// Rasterize one binary sprite into `img` (row-major `resolution^2` buffer).
fn render_sprite(img: &mut [u8], resolution: usize, shape: usize, scale: f64, theta: f64, px: f64, py: f64) {
    let res = resolution as f64;
    // Centers stay within the middle half of the frame so the largest rotated
    // sprite never clips at the border.
    let cx = 0.25 * res + px * 0.5 * res;
    let cy = 0.25 * res + py * 0.5 * res;
    let h = scale * SIZE_FRACTION * res;
    let (sin_t, cos_t) = theta.sin_cos();

    // Only visit pixels near the sprite's bounding circle.
    let reach = h * std::f64::consts::SQRT_2 + 1.0;
    let r_lo = ((cy - reach).floor().max(0.0)) as usize;
    let r_hi = ((cy + reach).ceil().min(res - 1.0)) as usize;
    let c_lo = ((cx - reach).floor().max(0.0)) as usize;
    let c_hi = ((cx + reach).ceil().min(res - 1.0)) as usize;

    let n_sub = SUPERSAMPLE * SUPERSAMPLE;
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            let mut hits = 0usize;
            for sr in 0..SUPERSAMPLE {
                let y = (r as f64 + (sr as f64 + 0.5) / SUPERSAMPLE as f64 - cy) / h;
                for sc in 0..SUPERSAMPLE {
                    let x = (c as f64 + (sc as f64 + 0.5) / SUPERSAMPLE as f64 - cx) / h;
                    // Rotate the sample into the sprite's canonical frame.
                    let u = cos_t * x + sin_t * y;
                    let v = -sin_t * x + cos_t * y;
                    if inside(shape, u, v) {
                        hits += 1;
                    }
                }
            }
            if 2 * hits >= n_sub {
                img[r * resolution + c] = 255;
            }
        }
    }
}

/// Generate one binary sprite image per factor combination.
pub fn generate_dsprites(space: &FactorSpace, resolution: usize) -> Result<DatasetHandle> {
    let expected = ["shape", "scale", "orientation", "pos_x", "pos_y"];
    if space.num_factors() != 5 || space.names().iter().zip(expected).any(|(a, b)| a != b) {
        return Err(Error::InvalidConfig(format!(
            "sprite generation needs factors {expected:?}, got {:?}",
            space.names()
        )));
    }
    if resolution < 16 {
        return Err(Error::InvalidConfig(format!(
            "resolution {resolution} below the minimum of 16"
        )));
    }
    let min_scale = space.grids()[1][0];
    if min_scale * SIZE_FRACTION * (resolution as f64) < 1.0 {
        return Err(Error::InvalidConfig(format!(
            "resolution {resolution} cannot render the smallest scale {min_scale}"
        )));
    }
    if space.total() > u16::MAX as usize * 64 {
        // Guard the u16 factor table: every cardinality must fit.
        if space.cardinalities().iter().any(|&c| c > u16::MAX as usize) {
            return Err(Error::InvalidConfig("factor cardinality exceeds the u16 table range".into()));
        }
    }

    let n = space.total();
    let px_per_image = resolution * resolution;
    let mut pixels = vec![0u8; n * px_per_image];
    let mut table = vec![0u16; n * 5];

    pixels
        .par_chunks_mut(px_per_image)
        .zip(table.par_chunks_mut(5))
        .enumerate()
        .for_each(|(i, (img, row))| {
            let v = space.index_to_factors(i).expect("index in range");
            let vals = space.values(&v).expect("factors in range");
            for (dst, &src) in row.iter_mut().zip(&v) {
                *dst = src as u16;
            }
            render_sprite(img, resolution, v[0], vals[1], vals[2], vals[3], vals[4]);
        });

    let images = Array4::from_shape_vec((n, resolution, resolution, 1), pixels)
        .expect("pixel buffer matches shape");
    let factor_table = Array2::from_shape_vec((n, 5), table).expect("table matches shape");
    Ok(DatasetHandle {
        factor_space: Some(space.clone()),
        images,
        factor_table: Some(factor_table),
        variant: VariantConfig::plain(),
    })
}
