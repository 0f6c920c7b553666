//! Tied-weight autoencoder used for greedy layer-wise pretraining.
//!
//! `h = tanh(x W + b)`, `x̂ = h Wᵀ + c`, trained on mean squared
//! reconstruction error. `W` is stored `input × hidden`, matching the
//! Dense layer layout so the encoder drops straight into a network.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::nn::gemm::{matmul, matmul_nt, matmul_tn};
use crate::nn::loss::mse;
use crate::nn::{glorot, AdamState};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct TiedAutoencoder {
    pub input: usize,
    pub hidden: usize,
    /// `[W (input×hidden), b (hidden), c (input)]`
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub decay: f64,
    pub seed: u64,
}

impl TiedAutoencoder {
    pub fn new(input: usize, hidden: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let bound = glorot(input, hidden);
        let mut params = vec![0.0; input * hidden + hidden + input];
        for w in &mut params[..input * hidden] {
            *w = rng.random_range(-bound..bound);
        }
        Self { input, hidden, params }
    }

    fn split(&self) -> (&[f64], &[f64], &[f64]) {
        let (w, rest) = self.params.split_at(self.input * self.hidden);
        let (b, c) = rest.split_at(self.hidden);
        (w, b, c)
    }

    /// Dense-layer parameters `[W, b]` of the encoder.
    pub fn encoder_params(&self) -> Vec<f64> {
        self.params[..self.input * self.hidden + self.hidden].to_vec()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let rows = self.rows(x)?;
        let (w, b, _) = self.split();
        let mut h = vec![0.0; rows * self.hidden];
        for r in h.chunks_exact_mut(self.hidden) {
            r.copy_from_slice(b);
        }
        matmul(rows, self.input, self.hidden, x, w, 1.0, &mut h);
        h.iter_mut().for_each(|v| *v = v.tanh());
        Ok(h)
    }

    fn rows(&self, x: &[f64]) -> Result<usize> {
        if x.len() % self.input != 0 {
            return Err(Error::domain(format!("autoencoder expects width {}", self.input)));
        }
        Ok(x.len() / self.input)
    }

    /// Mean squared reconstruction error and its gradient over all parameters.
    pub fn loss_and_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let rows = self.rows(x)?;
        let (n, k) = (self.input, self.hidden);
        let (w, _, c) = self.split();
        let h = self.encode(x)?;
        let mut recon = vec![0.0; rows * n];
        for r in recon.chunks_exact_mut(n) {
            r.copy_from_slice(c);
        }
        // x̂ = h Wᵀ + c, with W stored n×k so Wᵀ is the "nt" layout.
        matmul_nt(rows, k, n, &h, w, 1.0, &mut recon);
        let (loss, dr) = mse(&recon, x)?;

        let mut grad = vec![0.0; self.params.len()];
        let (gw, rest) = grad.split_at_mut(n * k);
        let (gb, gc) = rest.split_at_mut(k);
        for r in dr.chunks_exact(n) {
            for (g, v) in gc.iter_mut().zip(r) {
                *g += v;
            }
        }
        // Decoder path: dW += drᵀ h  (n×k).
        matmul_tn(n, rows, k, &dr, &h, 0.0, gw);
        // dh = dr W, then through tanh.
        let mut dz = vec![0.0; rows * k];
        matmul(rows, n, k, &dr, w, 0.0, &mut dz);
        for (d, hv) in dz.iter_mut().zip(&h) {
            *d *= 1.0 - hv * hv;
        }
        for r in dz.chunks_exact(k) {
            for (g, v) in gb.iter_mut().zip(r) {
                *g += v;
            }
        }
        // Encoder path: dW += xᵀ dz.
        matmul_tn(n, rows, k, x, &dz, 1.0, gw);
        Ok((loss, grad))
    }
}

/// Trains one tied autoencoder on `x` (rows of width `input`).
pub fn pretrain(x: &[f64], input: usize, hidden: usize, cfg: &PretrainConfig) -> Result<TiedAutoencoder> {
    let mut ae = TiedAutoencoder::new(input, hidden, cfg.seed);
    let rows = ae.rows(x)?;
    let mut params = vec![std::mem::take(&mut ae.params)];
    let mut adam = AdamState::new(&params, cfg.lr, cfg.decay);
    let mut order: Vec<usize> = (0..rows).collect();
    let mut xb = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut crate::rng::rng_from(&[cfg.seed, epoch as u64]));
        for idx in order.chunks(cfg.batch.max(1)) {
            xb.clear();
            for &i in idx {
                xb.extend_from_slice(&x[i * input..(i + 1) * input]);
            }
            ae.params = std::mem::take(&mut params[0]);
            let (loss, g) = ae.loss_and_grad(&xb)?;
            params[0] = std::mem::take(&mut ae.params);
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("autoencoder pretraining diverged at epoch {epoch}")));
            }
            adam.step(&mut params, &[g]);
        }
    }
    ae.params = params.pop().unwrap();
    Ok(ae)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_function;
    use rand::Rng;

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(5);
        let mut ae = TiedAutoencoder::new(6, 3, 2);
        for v in ae.params[18..].iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        let x: Vec<f64> = (0..4 * 6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, g) = ae.loss_and_grad(&x).unwrap();
        let f = |p: &[f64]| {
            let m = TiedAutoencoder { input: 6, hidden: 3, params: p.to_vec() };
            m.loss_and_grad(&x).unwrap().0
        };
        assert!(check_function(f, &ae.params, &g, 1e-5) < 1e-4);
    }

    #[test]
    fn pretraining_reduces_reconstruction_error() {
        let mut rng = rng_from_seed(8);
        let x: Vec<f64> = (0..64 * 8).map(|i| ((i % 8) as f64 * 0.3).sin() + 0.1 * rng.random_range(-1.0..1.0)).collect();
        let cfg = PretrainConfig { epochs: 30, batch: 16, lr: 1e-2, decay: 0.0, seed: 1 };
        let before = TiedAutoencoder::new(8, 4, 1).loss_and_grad(&x).unwrap().0;
        let after = pretrain(&x, 8, 4, &cfg).unwrap().loss_and_grad(&x).unwrap().0;
        assert!(after < 0.5 * before, "{before} -> {after}");
    }
}
