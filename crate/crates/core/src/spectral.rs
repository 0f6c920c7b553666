//! Real-input FFT helpers on top of `rustfft`, with a per-thread planner cache.

use std::cell::RefCell;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// One-sided spectrum of a real signal: `n/2 + 1` bins, unnormalized.
pub fn rfft(x: &[f64]) -> Vec<Complex64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n).process(&mut buf));
    buf.truncate(n / 2 + 1);
    buf
}

/// Inverse of [`rfft`] for a length-`n` real signal, including the `1/n` factor.
pub fn irfft(spec: &[Complex64], n: usize) -> Vec<f64> {
    assert_eq!(spec.len(), n / 2 + 1, "one-sided spectrum length mismatch");
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..spec.len()].copy_from_slice(spec);
    for k in 1..n.div_ceil(2) {
        buf[n - k] = spec[k].conj();
    }
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n).process(&mut buf));
    let scale = 1.0 / n as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Frequency of one-sided bin `k` for an `n`-point transform at `rate` Hz.
pub fn bin_frequency(k: usize, n: usize, rate: f64) -> f64 {
    k as f64 * rate / n as f64
}
