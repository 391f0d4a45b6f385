use ndarray::{ArrayD, Ix4};

use super::Scalar;
use crate::{Error, Result};

fn src_coords(out_i: usize, scale: f64, in_len: usize) -> (usize, usize, f64) {
    // Half-pixel-center convention; clamped at the borders.
    let s = ((out_i as f64 + 0.5) * scale - 0.5).max(0.0);
    let i0 = (s.floor() as usize).min(in_len - 1);
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, s - i0 as f64)
}

/// Bilinear resize of an `[N, C, H, W]` batch to `out_h x out_w`.
///
/// This is a fixed linear map of the input, so its derivative is given by
/// [`bilinear_resize_adjoint`].
pub fn bilinear_resize<T: Scalar>(x: &ArrayD<T>, out_h: usize, out_w: usize) -> Result<ArrayD<T>> {
    let x4 = x
        .view()
        .into_dimensionality::<Ix4>()
        .map_err(|_| Error::Shape(format!("resize expects [N,C,H,W], got {:?}", x.shape())))?;
    let (n, c, h, w) = x4.dim();
    let sh = h as f64 / out_h as f64;
    let sw = w as f64 / out_w as f64;
    let mut y = ArrayD::zeros(vec![n, c, out_h, out_w]);
    let mut y4 = y.view_mut().into_dimensionality::<Ix4>().unwrap();
    for oi in 0..out_h {
        let (i0, i1, fi) = src_coords(oi, sh, h);
        for oj in 0..out_w {
            let (j0, j1, fj) = src_coords(oj, sw, w);
            let w00 = T::from_f64((1.0 - fi) * (1.0 - fj));
            let w01 = T::from_f64((1.0 - fi) * fj);
            let w10 = T::from_f64(fi * (1.0 - fj));
            let w11 = T::from_f64(fi * fj);
            for ni in 0..n {
                for ci in 0..c {
                    y4[[ni, ci, oi, oj]] = x4[[ni, ci, i0, j0]] * w00
                        + x4[[ni, ci, i0, j1]] * w01
                        + x4[[ni, ci, i1, j0]] * w10
                        + x4[[ni, ci, i1, j1]] * w11;
                }
            }
        }
    }
    Ok(y)
}

/// Adjoint of [`bilinear_resize`]: scatters output-space gradients back to an
/// input of size `in_h x in_w`.
pub fn bilinear_resize_adjoint<T: Scalar>(dy: &ArrayD<T>, in_h: usize, in_w: usize) -> Result<ArrayD<T>> {
    let dy4 = dy
        .view()
        .into_dimensionality::<Ix4>()
        .map_err(|_| Error::Shape(format!("resize adjoint expects [N,C,H,W], got {:?}", dy.shape())))?;
    let (n, c, out_h, out_w) = dy4.dim();
    let sh = in_h as f64 / out_h as f64;
    let sw = in_w as f64 / out_w as f64;
    let mut dx = ArrayD::zeros(vec![n, c, in_h, in_w]);
    let mut dx4 = dx.view_mut().into_dimensionality::<Ix4>().unwrap();
    for oi in 0..out_h {
        let (i0, i1, fi) = src_coords(oi, sh, in_h);
        for oj in 0..out_w {
            let (j0, j1, fj) = src_coords(oj, sw, in_w);
            let w00 = T::from_f64((1.0 - fi) * (1.0 - fj));
            let w01 = T::from_f64((1.0 - fi) * fj);
            let w10 = T::from_f64(fi * (1.0 - fj));
            let w11 = T::from_f64(fi * fj);
            for ni in 0..n {
                for ci in 0..c {
                    let g = dy4[[ni, ci, oi, oj]];
                    dx4[[ni, ci, i0, j0]] = dx4[[ni, ci, i0, j0]] + g * w00;
                    dx4[[ni, ci, i0, j1]] = dx4[[ni, ci, i0, j1]] + g * w01;
                    dx4[[ni, ci, i1, j0]] = dx4[[ni, ci, i1, j0]] + g * w10;
                    dx4[[ni, ci, i1, j1]] = dx4[[ni, ci, i1, j1]] + g * w11;
                }
            }
        }
    }
    Ok(dx)
}
