use ndarray::{Array1, ArrayD};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::Network;
use crate::Result;

/// Central finite-difference check of a network's parameter gradients.
///
/// `loss` maps the network output to a scalar objective and its gradient with
/// respect to that output. The analytic gradient from backpropagation is
/// compared against central differences on `n_probes` randomly chosen
/// parameters; the maximum relative error is returned.
///
/// Intended for `f64` networks with `perturbation` around 1e-5.
pub fn finite_difference_check<F>(
    net: &mut Network<f64>,
    x: &ArrayD<f64>,
    loss: F,
    n_probes: usize,
    perturbation: f64,
    seed: u64,
) -> Result<f64>
where
    F: Fn(&ArrayD<f64>) -> (f64, ArrayD<f64>),
{
    let (y, tape) = net.forward_train(x)?;
    let (_, dy) = loss(&y);
    let (_, analytic) = net.backward(&tape, &dy);

    let mut params: Array1<f64> = net.flat_params();
    let n = params.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel = 0.0f64;
    for _ in 0..n_probes.min(n) {
        let idx = rng.gen_range(0..n);
        let orig = params[idx];

        params[idx] = orig + perturbation;
        net.set_flat_params(&params)?;
        let up = loss(&net.forward(x, true)?).0;

        params[idx] = orig - perturbation;
        net.set_flat_params(&params)?;
        let down = loss(&net.forward(x, true)?).0;

        params[idx] = orig;
        let fd = (up - down) / (2.0 * perturbation);
        let g = analytic[idx];
        // The floor absorbs finite-difference roundoff (~1e-9 at this
        // perturbation) on coordinates whose true gradient is zero.
        let rel = (fd - g).abs() / fd.abs().max(g.abs()).max(1e-4);
        max_rel = max_rel.max(rel);
    }
    net.set_flat_params(&params)?;
    Ok(max_rel)
}
