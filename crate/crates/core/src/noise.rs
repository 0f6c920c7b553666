//! White noise, matched-filter SNR, Welch PSD estimation and whitening.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spectral;
use crate::waveforms::{TimeGrid, TimeSeries};

/// Bins below this fraction of the PSD maximum are raised to it before whitening.
pub const PSD_FLOOR_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    WhiteGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Standard deviation per sample.
    pub sigma: f64,
}

impl NoiseModel {
    pub fn white(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!("noise sigma must be positive, got {sigma}")));
        }
        Ok(Self { kind: NoiseKind::WhiteGaussian, sigma })
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { kind: NoiseKind::WhiteGaussian, sigma: 1.0 }
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub frequencies: Vec<f64>,
    pub power: Vec<f64>,
    pub segment_length: usize,
}

impl PsdEstimate {
    /// A flat one-sided PSD of level `value` on the bins of a `segment_length` transform.
    pub fn flat(value: f64, segment_length: usize, sample_rate: f64) -> Self {
        let frequencies = (0..=segment_length / 2)
            .map(|k| spectral::bin_frequency(k, segment_length, sample_rate))
            .collect();
        Self { frequencies, power: vec![value; segment_length / 2 + 1], segment_length }
    }

    /// Linear interpolation in frequency, clamped to the end bins.
    pub fn at(&self, f: f64) -> f64 {
        let fr = &self.frequencies;
        if f <= fr[0] {
            return self.power[0];
        }
        let last = fr.len() - 1;
        if f >= fr[last] {
            return self.power[last];
        }
        let i = fr.partition_point(|&x| x <= f) - 1;
        let w = (f - fr[i]) / (fr[i + 1] - fr[i]);
        self.power[i] * (1.0 - w) + self.power[i + 1] * w
    }

    /// Copy with every bin raised to at least `PSD_FLOOR_RATIO * max`.
    pub fn floored(&self) -> Self {
        let max = self.power.iter().cloned().fold(0.0f64, f64::max);
        let floor = PSD_FLOOR_RATIO * max;
        Self {
            frequencies: self.frequencies.clone(),
            power: self.power.iter().map(|&p| p.max(floor)).collect(),
            segment_length: self.segment_length,
        }
    }
}

/// i.i.d. zero-mean Gaussian samples with standard deviation `sigma`.
pub fn white_noise(n: usize, sigma: f64, rng: &mut impl Rng) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::domain("noise length must be at least 1"));
    }
    NoiseModel::white(sigma)?;
    Ok((0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect())
}

/// White-noise series on `grid`.
pub fn white_noise_series(grid: &TimeGrid, sigma: f64, rng: &mut impl Rng) -> Result<TimeSeries> {
    TimeSeries::new(white_noise(grid.n_samples, sigma, rng)?, *grid)
}

/// Optimal matched-filter SNR in white noise: `||s||_2 / sigma`.
pub fn matched_filter_snr(signal: &TimeSeries, noise: &NoiseModel) -> f64 {
    match noise.kind {
        NoiseKind::WhiteGaussian => {
            signal.samples.iter().map(|v| v * v).sum::<f64>().sqrt() / noise.sigma
        }
    }
}

/// Rescales `signal` so that its matched-filter SNR equals `target_snr`.
pub fn scale_to_snr(signal: &TimeSeries, target_snr: f64, noise: &NoiseModel) -> Result<TimeSeries> {
    if !(target_snr > 0.0 && target_snr.is_finite()) {
        return Err(Error::domain(format!("target SNR must be positive, got {target_snr}")));
    }
    let current = matched_filter_snr(signal, noise);
    if current == 0.0 {
        return Err(Error::domain("cannot scale an all-zero signal to a nonzero SNR"));
    }
    let k = target_snr / current;
    TimeSeries::new(signal.samples.iter().map(|v| v * k).collect(), signal.grid)
}

fn hann(n: usize) -> Vec<f64> {
    // periodic Hann, as used for spectral estimation
    (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect()
}

/// Welch estimate: Hann-windowed, 50%-overlapping segments, one-sided
/// density normalization (strain^2/Hz).
pub fn estimate_psd(series: &TimeSeries, segment_length: usize) -> Result<PsdEstimate> {
    welch(&series.samples, series.grid.sample_rate, segment_length)
}

pub fn welch(x: &[f64], sample_rate: f64, segment_length: usize) -> Result<PsdEstimate> {
    if segment_length < 2 || !segment_length.is_power_of_two() {
        return Err(Error::domain(format!(
            "segment length must be a power of two >= 2, got {segment_length}"
        )));
    }
    if segment_length > x.len() {
        return Err(Error::domain(format!(
            "segment length {segment_length} exceeds series length {}",
            x.len()
        )));
    }
    let window = hann(segment_length);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let step = segment_length / 2;
    let n_bins = segment_length / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut segments = 0usize;
    let mut buf = vec![0.0; segment_length];
    let mut start = 0;
    while start + segment_length <= x.len() {
        for (b, (v, w)) in buf.iter_mut().zip(x[start..start + segment_length].iter().zip(&window)) {
            *b = v * w;
        }
        let spec = spectral::rfft(&buf);
        for (a, c) in acc.iter_mut().zip(&spec) {
            *a += c.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let scale = 1.0 / (sample_rate * window_power * segments as f64);
    let power = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let one_sided = if k == 0 || k == n_bins - 1 { 1.0 } else { 2.0 };
            p * scale * one_sided
        })
        .collect();
    let frequencies =
        (0..n_bins).map(|k| spectral::bin_frequency(k, segment_length, sample_rate)).collect();
    Ok(PsdEstimate { frequencies, power, segment_length })
}

/// Divides the spectrum of `series` by `sqrt(psd * rate / 2)` and transforms
/// back. Unit-variance white noise passes through unchanged in distribution.
pub fn whiten(series: &TimeSeries, psd: &PsdEstimate) -> Result<TimeSeries> {
    let n = series.len();
    let rate = series.grid.sample_rate;
    let mut spec = spectral::rfft(&series.samples);
    for (k, c) in spec.iter_mut().enumerate() {
        let f = spectral::bin_frequency(k, n, rate);
        let p = psd.at(f);
        if !(p > 0.0 && p.is_finite()) {
            return Err(Error::domain(format!("PSD is not positive at {f} Hz ({p})")));
        }
        *c /= Complex64::new((p * rate / 2.0).sqrt(), 0.0);
    }
    TimeSeries::new(spectral::irfft(&spec, n), series.grid)
}
