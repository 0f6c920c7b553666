//! Central finite-difference gradient checks.

use rand::Rng;

use super::loss::softmax_cross_entropy;
use super::Network;
use crate::error::Result;

/// Denominator floor for the relative error, so entries whose true gradient
/// is at round-off level do not dominate.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Compares backprop against central differences of the softmax
/// cross-entropy loss of `net` on `(x, labels)`. When `per_tensor` is set,
/// only that many randomly chosen coordinates of each layer's parameters are
/// perturbed; input gradients are checked on the same budget.
pub fn check_network(
    net: &Network,
    x: &[f64],
    labels: &[u8],
    h: f64,
    per_tensor: Option<usize>,
    rng: &mut impl Rng,
) -> Result<GradCheckReport> {
    let batch = labels.len();
    let classes = net.output_width();
    let loss_of = |n: &Network, input: &[f64]| -> Result<f64> {
        let out = n.predict(input, batch)?;
        Ok(softmax_cross_entropy(&out, labels, classes)?.0)
    };
    let cache = net.forward(x, batch)?;
    let (_, g_out) = softmax_cross_entropy(cache.output(), labels, classes)?;
    let (grads, dx) = net.backward(&cache, &g_out)?;

    let pick = |len: usize, rng: &mut dyn rand::RngCore| -> Vec<usize> {
        match per_tensor {
            Some(k) if k < len => (0..k).map(|_| rng.random_range(0..len)).collect(),
            _ => (0..len).collect(),
        }
    };

    let mut work = net.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for layer in 0..net.params().len() {
        for i in pick(net.params()[layer].len(), rng) {
            let orig = net.params()[layer][i];
            work.params_mut()[layer][i] = orig + h;
            let up = loss_of(&work, x)?;
            work.params_mut()[layer][i] = orig - h;
            let down = loss_of(&work, x)?;
            work.params_mut()[layer][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(grads[layer][i], numeric));
            checked += 1;
        }
    }
    let mut xp = x.to_vec();
    for i in pick(x.len(), rng) {
        let orig = xp[i];
        xp[i] = orig + h;
        let up = loss_of(net, &xp)?;
        xp[i] = orig - h;
        let down = loss_of(net, &xp)?;
        xp[i] = orig;
        worst = worst.max(relative_error(dx[i], (up - down) / (2.0 * h)));
        checked += 1;
    }
    Ok(GradCheckReport { max_rel_error: worst, checked })
}

/// Gradient check for an arbitrary scalar function and its claimed gradient.
pub fn check_function(f: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], h: f64) -> f64 {
    let mut xp = x.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let up = f(&xp);
        xp[i] = orig - h;
        let down = f(&xp);
        xp[i] = orig;
        worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
    worst
}
