//! Synthesis of the eight transient morphologies on a uniform time grid.
//!
//! Closed-form classes (Gaussian, sine-Gaussian, ringdown, chirping
//! sine-Gaussian) are evaluated directly from their defining expressions and
//! returned unnormalized. The remaining classes are built as follows:
//!
//! * cusp: frequency-domain power law `f^(-4/3)` with an exponential roll-off
//!   above the cut-off, transformed back with zero phase and centred on `t0`;
//! * black-hole merger: leading-order Newtonian chirp stitched onto a damped
//!   ringdown with continuous value and slope;
//! * blip: sine-Gaussian hard-clipped at a fraction of its peak;
//! * supernova: a catalog template, or a 78-member analytic family of
//!   bounce-like dips followed by damped oscillations.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral;

/// Envelope level (relative to peak) that must fall inside the window.
const SUPPORT_LEVEL: f64 = 0.05;

pub const GAUSSIAN_TAUS: [f64; 8] = [0.0005, 0.001, 0.0025, 0.005, 0.0075, 0.01, 0.02, 0.05];
pub const SG_F0_RANGE: (f64, f64) = (100.0, 2000.0);
pub const CSG_F0_RANGE: (f64, f64) = (5.0, 100.0);
pub const CSG_ALPHA_RANGE: (f64, f64) = (10.0, 100.0);
pub const CSG_TAU_RANGE: (f64, f64) = (0.001, 0.025);
pub const CUSP_F0_RANGE: (f64, f64) = (50.0, 2000.0);
pub const CHIRP_MASS_RANGE: (f64, f64) = (20.0, 50.0);
pub const BLIP_CLIP_RANGE: (f64, f64) = (0.05, 0.25);
pub const SUPERNOVA_SURROGATE_MODELS: usize = 78;

/// Merger surrogate constants.
const MERGER_F_LOW: f64 = 30.0;
const MERGER_F_PEAK: f64 = 700.0;
/// G * M_sun / c^3 in seconds.
const SOLAR_MASS_SECONDS: f64 = 4.925_490_947e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub n_samples: usize,
    pub sample_rate: f64,
    /// Signal reference time within the window, seconds.
    pub t0: f64,
}

impl TimeGrid {
    pub fn new(n_samples: usize, sample_rate: f64, t0: f64) -> Result<Self> {
        if n_samples == 0 || !n_samples.is_power_of_two() {
            return Err(Error::domain(format!(
                "n_samples must be a power of two, got {n_samples}"
            )));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::domain(format!("sample_rate must be positive, got {sample_rate}")));
        }
        let duration = n_samples as f64 / sample_rate;
        if !(0.0..duration).contains(&t0) {
            return Err(Error::domain(format!("t0={t0} outside window [0, {duration})")));
        }
        Ok(Self { n_samples, sample_rate, t0 })
    }

    /// Grid with `t0` on the middle sample.
    pub fn centered(n_samples: usize, sample_rate: f64) -> Result<Self> {
        Self::new(n_samples, sample_rate, (n_samples / 2) as f64 / sample_rate)
    }

    pub fn duration(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.sample_rate
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_samples).map(|i| self.time(i))
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { n_samples: 1024, sample_rate: 4096.0, t0: 512.0 / 4096.0 }
    }
}

/// Transient classes with their fixed integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum TransientClass {
    Ringdown = 0,
    SineGaussian = 1,
    Gaussian = 2,
    ChirpingSineGaussian = 3,
    Cusp = 4,
    BlackHoleMerger = 5,
    Blip = 6,
    Supernova = 7,
}

impl TransientClass {
    pub const COUNT: usize = 8;

    pub const ALL: [TransientClass; 8] = [
        TransientClass::Ringdown,
        TransientClass::SineGaussian,
        TransientClass::Gaussian,
        TransientClass::ChirpingSineGaussian,
        TransientClass::Cusp,
        TransientClass::BlackHoleMerger,
        TransientClass::Blip,
        TransientClass::Supernova,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or_else(|| Error::domain(format!("unknown transient class code {code}")))
    }

    /// Display name as used in confusion-matrix headers.
    pub fn name(self) -> &'static str {
        match self {
            TransientClass::Ringdown => "Ring Gaussian",
            TransientClass::SineGaussian => "Sine Gaussian",
            TransientClass::Gaussian => "Gaussian",
            TransientClass::ChirpingSineGaussian => "Chirping Sine Gaussian",
            TransientClass::Cusp => "Cusp",
            TransientClass::BlackHoleMerger => "Binary Black Hole Merger",
            TransientClass::Blip => "Blip",
            TransientClass::Supernova => "Supernova",
        }
    }
}

impl fmt::Display for TransientClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-class generating parameters. Frequencies in Hz, times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WaveformParams {
    Gaussian { tau: f64 },
    SineGaussian { f0: f64, tau: f64 },
    Ringdown { f0: f64, tau: f64 },
    ChirpingSineGaussian { f0: f64, alpha: f64, tau: f64 },
    Cusp { f0: f64, amplitude: f64 },
    BlackHoleMerger { chirp_mass: f64, cos_iota: f64 },
    Blip { f0: f64, tau: f64, clip_fraction: f64 },
    Supernova { model_id: u32 },
}

impl WaveformParams {
    pub fn class(&self) -> TransientClass {
        match self {
            WaveformParams::Gaussian { .. } => TransientClass::Gaussian,
            WaveformParams::SineGaussian { .. } => TransientClass::SineGaussian,
            WaveformParams::Ringdown { .. } => TransientClass::Ringdown,
            WaveformParams::ChirpingSineGaussian { .. } => TransientClass::ChirpingSineGaussian,
            WaveformParams::Cusp { .. } => TransientClass::Cusp,
            WaveformParams::BlackHoleMerger { .. } => TransientClass::BlackHoleMerger,
            WaveformParams::Blip { .. } => TransientClass::Blip,
            WaveformParams::Supernova { .. } => TransientClass::Supernova,
        }
    }

    /// Fixed six-slot numeric encoding used by the binary dataset format.
    pub fn to_slots(&self) -> [f64; 6] {
        let mut s = [0.0; 6];
        match *self {
            WaveformParams::Gaussian { tau } => s[0] = tau,
            WaveformParams::SineGaussian { f0, tau } | WaveformParams::Ringdown { f0, tau } => {
                s[0] = f0;
                s[1] = tau;
            }
            WaveformParams::ChirpingSineGaussian { f0, alpha, tau } => {
                s[..3].copy_from_slice(&[f0, alpha, tau]);
            }
            WaveformParams::Cusp { f0, amplitude } => s[..2].copy_from_slice(&[f0, amplitude]),
            WaveformParams::BlackHoleMerger { chirp_mass, cos_iota } => {
                s[..2].copy_from_slice(&[chirp_mass, cos_iota])
            }
            WaveformParams::Blip { f0, tau, clip_fraction } => {
                s[..3].copy_from_slice(&[f0, tau, clip_fraction])
            }
            WaveformParams::Supernova { model_id } => s[0] = model_id as f64,
        }
        s
    }

    pub fn from_slots(class: TransientClass, s: &[f64; 6]) -> Result<Self> {
        let p = match class {
            TransientClass::Gaussian => WaveformParams::Gaussian { tau: s[0] },
            TransientClass::SineGaussian => WaveformParams::SineGaussian { f0: s[0], tau: s[1] },
            TransientClass::Ringdown => WaveformParams::Ringdown { f0: s[0], tau: s[1] },
            TransientClass::ChirpingSineGaussian => {
                WaveformParams::ChirpingSineGaussian { f0: s[0], alpha: s[1], tau: s[2] }
            }
            TransientClass::Cusp => WaveformParams::Cusp { f0: s[0], amplitude: s[1] },
            TransientClass::BlackHoleMerger => {
                WaveformParams::BlackHoleMerger { chirp_mass: s[0], cos_iota: s[1] }
            }
            TransientClass::Blip => WaveformParams::Blip { f0: s[0], tau: s[1], clip_fraction: s[2] },
            TransientClass::Supernova => {
                let id = s[0];
                if !(id >= 0.0 && id.fract() == 0.0 && id <= u32::MAX as f64) {
                    return Err(Error::domain(format!("invalid supernova model id {id}")));
                }
                WaveformParams::Supernova { model_id: id as u32 }
            }
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::domain(format!("{name} must be positive and finite, got {v}")))
            }
        };
        match *self {
            WaveformParams::Gaussian { tau } => positive("tau", tau),
            WaveformParams::SineGaussian { f0, tau } | WaveformParams::Ringdown { f0, tau } => {
                positive("f0", f0)?;
                positive("tau", tau)
            }
            WaveformParams::ChirpingSineGaussian { f0, alpha, tau } => {
                positive("f0", f0)?;
                positive("tau", tau)?;
                if alpha.is_finite() {
                    Ok(())
                } else {
                    Err(Error::domain("alpha must be finite"))
                }
            }
            WaveformParams::Cusp { f0, amplitude } => {
                positive("f0", f0)?;
                positive("amplitude", amplitude)
            }
            WaveformParams::BlackHoleMerger { chirp_mass, cos_iota } => {
                let (lo, hi) = CHIRP_MASS_RANGE;
                if !(lo..=hi).contains(&chirp_mass) {
                    return Err(Error::domain(format!("chirp mass {chirp_mass} outside [{lo}, {hi}]")));
                }
                if !(0.0..=1.0).contains(&cos_iota) {
                    return Err(Error::domain(format!("cos_iota {cos_iota} outside [0, 1]")));
                }
                Ok(())
            }
            WaveformParams::Blip { f0, tau, clip_fraction } => {
                positive("f0", f0)?;
                positive("tau", tau)?;
                check_clip_fraction(clip_fraction)
            }
            WaveformParams::Supernova { .. } => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub samples: Vec<f64>,
    pub grid: TimeGrid,
}

impl TimeSeries {
    pub fn new(samples: Vec<f64>, grid: TimeGrid) -> Result<Self> {
        if samples.len() != grid.n_samples {
            return Err(Error::domain(format!(
                "sample count {} does not match grid size {}",
                samples.len(),
                grid.n_samples
            )));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite sample at index {i}")));
        }
        Ok(Self { samples, grid })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Rescales so that `max |s| == 1`. A zero series is left unchanged.
    pub fn normalize_peak(mut self) -> Self {
        let peak = self.peak();
        if peak > 0.0 {
            self.samples.iter_mut().for_each(|v| *v /= peak);
        }
        self
    }
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

/// Draws parameters for `class` assuming the built-in supernova family.
pub fn sample_params(class: TransientClass, rng: &mut impl Rng) -> WaveformParams {
    sample_params_with_catalog(class, SUPERNOVA_SURROGATE_MODELS, rng)
}

/// Draws parameters for `class`; supernova model ids are uniform over
/// `supernova_models` catalog entries.
pub fn sample_params_with_catalog(
    class: TransientClass,
    supernova_models: usize,
    rng: &mut impl Rng,
) -> WaveformParams {
    match class {
        TransientClass::Gaussian => {
            WaveformParams::Gaussian { tau: GAUSSIAN_TAUS[rng.random_range(0..GAUSSIAN_TAUS.len())] }
        }
        TransientClass::SineGaussian => {
            let f0 = log_uniform(rng, SG_F0_RANGE);
            WaveformParams::SineGaussian { f0, tau: 2.0 / f0 }
        }
        TransientClass::Ringdown => {
            let f0 = log_uniform(rng, SG_F0_RANGE);
            WaveformParams::Ringdown { f0, tau: 4.0 / f0 }
        }
        TransientClass::ChirpingSineGaussian => WaveformParams::ChirpingSineGaussian {
            f0: uniform(rng, CSG_F0_RANGE),
            alpha: uniform(rng, CSG_ALPHA_RANGE),
            tau: uniform(rng, CSG_TAU_RANGE),
        },
        TransientClass::Cusp => WaveformParams::Cusp { f0: uniform(rng, CUSP_F0_RANGE), amplitude: 1.0 },
        TransientClass::BlackHoleMerger => WaveformParams::BlackHoleMerger {
            chirp_mass: uniform(rng, CHIRP_MASS_RANGE),
            cos_iota: rng.random::<f64>(),
        },
        TransientClass::Blip => {
            let f0 = log_uniform(rng, SG_F0_RANGE);
            WaveformParams::Blip { f0, tau: 2.0 / f0, clip_fraction: uniform(rng, BLIP_CLIP_RANGE) }
        }
        TransientClass::Supernova => {
            WaveformParams::Supernova { model_id: rng.random_range(0..supernova_models.max(1)) as u32 }
        }
    }
}

fn check_support(grid: &TimeGrid, before: f64, after: f64, what: &str) -> Result<()> {
    let end = (grid.n_samples - 1) as f64 / grid.sample_rate;
    if grid.t0 - before < 0.0 || grid.t0 + after > end {
        return Err(Error::domain(format!(
            "{what} support [t0-{before:.4}, t0+{after:.4}] s does not fit a {:.4} s window with t0={:.4}",
            grid.duration(),
            grid.t0
        )));
    }
    Ok(())
}

fn gaussian_halfwidth(tau: f64) -> f64 {
    tau * (1.0 / SUPPORT_LEVEL).ln().sqrt()
}

fn check_clip_fraction(clip_fraction: f64) -> Result<()> {
    if clip_fraction > 0.0 && clip_fraction < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("clip fraction must lie in (0, 1), got {clip_fraction}")))
    }
}

/// Synthesizes `class` with the built-in supernova surrogate family.
pub fn synthesize(class: TransientClass, params: &WaveformParams, grid: &TimeGrid) -> Result<TimeSeries> {
    Synthesizer::new(*grid).synthesize(class, params)
}

/// Waveform generator bound to a grid and an optional supernova catalog.
#[derive(Debug, Clone)]
pub struct Synthesizer {
    grid: TimeGrid,
    catalog: Option<Arc<SupernovaCatalog>>,
}

impl Synthesizer {
    pub fn new(grid: TimeGrid) -> Self {
        Self { grid, catalog: None }
    }

    pub fn with_catalog(mut self, catalog: Arc<SupernovaCatalog>) -> Self {
        self.catalog = Some(catalog);
        self
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn supernova_models(&self) -> usize {
        self.catalog.as_ref().map_or(SUPERNOVA_SURROGATE_MODELS, |c| c.len())
    }

    pub fn synthesize(&self, class: TransientClass, params: &WaveformParams) -> Result<TimeSeries> {
        if params.class() != class {
            return Err(Error::domain(format!(
                "parameters for {} passed for class {}",
                params.class(),
                class
            )));
        }
        params.validate()?;
        let grid = &self.grid;
        let t0 = grid.t0;
        let samples: Vec<f64> = match *params {
            WaveformParams::Gaussian { tau } => {
                let hw = gaussian_halfwidth(tau);
                check_support(grid, hw, hw, "gaussian")?;
                grid.times().map(|t| gaussian_envelope(t - t0, tau)).collect()
            }
            WaveformParams::SineGaussian { f0, tau } => {
                let hw = gaussian_halfwidth(tau);
                check_support(grid, hw, hw, "sine-gaussian")?;
                grid.times().map(|t| sine_gaussian(t - t0, f0, tau)).collect()
            }
            WaveformParams::Ringdown { f0, tau } => {
                check_support(grid, 0.0, tau * (1.0 / SUPPORT_LEVEL).ln(), "ringdown")?;
                grid.times()
                    .map(|t| {
                        let dt = t - t0;
                        if dt < 0.0 {
                            0.0
                        } else {
                            (-dt / tau).exp() * (2.0 * PI * f0 * dt).cos()
                        }
                    })
                    .collect()
            }
            WaveformParams::ChirpingSineGaussian { f0, alpha, tau } => {
                let hw = gaussian_halfwidth(2.0 * tau);
                check_support(grid, hw, hw, "chirping sine-gaussian")?;
                let norm = (2.0 * PI * tau * tau).powf(-0.25);
                grid.times()
                    .map(|t| {
                        let dt = t - t0;
                        let u = dt * dt / (4.0 * tau * tau);
                        norm * (-u).exp() * (alpha * u + 2.0 * PI * f0 * dt).cos()
                    })
                    .collect()
            }
            WaveformParams::Cusp { f0, amplitude } => cusp(grid, f0, amplitude),
            WaveformParams::BlackHoleMerger { chirp_mass, cos_iota } => {
                merger(grid, chirp_mass, cos_iota)?
            }
            WaveformParams::Blip { f0, tau, clip_fraction } => {
                let sg = self.synthesize(
                    TransientClass::SineGaussian,
                    &WaveformParams::SineGaussian { f0, tau },
                )?;
                return clip_blip(&sg, clip_fraction);
            }
            WaveformParams::Supernova { model_id } => match &self.catalog {
                Some(cat) => cat
                    .get(model_id as usize)
                    .ok_or_else(|| {
                        Error::domain(format!(
                            "supernova model {model_id} not in catalog of {}",
                            cat.len()
                        ))
                    })?
                    .place_on(grid),
                None => supernova_surrogate(grid, model_id)?,
            },
        };
        TimeSeries::new(samples, *grid)
    }
}

fn gaussian_envelope(dt: f64, tau: f64) -> f64 {
    (-(dt * dt) / (tau * tau)).exp()
}

fn sine_gaussian(dt: f64, f0: f64, tau: f64) -> f64 {
    gaussian_envelope(dt, tau) * (2.0 * PI * f0 * dt).sin()
}

/// Magnitude response of the cusp burst at frequency `f`.
pub fn cusp_spectrum(f: f64, f0: f64) -> f64 {
    if f <= 0.0 {
        0.0
    } else if f <= f0 {
        f.powf(-4.0 / 3.0)
    } else {
        f0.powf(-4.0 / 3.0) * (1.0 - f / f0).exp()
    }
}

fn cusp(grid: &TimeGrid, f0: f64, amplitude: f64) -> Vec<f64> {
    let n = grid.n_samples;
    let spec: Vec<Complex64> = (0..=n / 2)
        .map(|k| {
            let f = spectral::bin_frequency(k, n, grid.sample_rate);
            // zero phase about t0
            Complex64::from_polar(cusp_spectrum(f, f0), -2.0 * PI * f * grid.t0)
        })
        .collect();
    let mut s = spectral::irfft(&spec, n);
    let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        s.iter_mut().for_each(|v| *v *= amplitude / peak);
    }
    s
}

/// Time from `MERGER_F_LOW` to coalescence for a leading-order chirp.
fn newtonian_chirp_duration(chirp_mass: f64) -> f64 {
    let m = chirp_mass * SOLAR_MASS_SECONDS;
    5.0 / 256.0 * m.powf(-5.0 / 3.0) * (PI * MERGER_F_LOW).powf(-8.0 / 3.0)
}

fn merger(grid: &TimeGrid, chirp_mass: f64, cos_iota: f64) -> Result<Vec<f64>> {
    let tau_r = 4.0 / MERGER_F_PEAK;
    check_support(grid, 0.0, tau_r * (1.0 / SUPPORT_LEVEL).ln(), "merger ringdown")?;

    let tau0 = newtonian_chirp_duration(chirp_mass);
    // time to coalescence when the frequency reaches the cap
    let tau_m = tau0 * (MERGER_F_LOW / MERGER_F_PEAK).powf(8.0 / 3.0);
    let incl = 0.5 * (1.0 + cos_iota * cos_iota);
    let freq = |tau: f64| MERGER_F_LOW * (tau / tau0).powf(-3.0 / 8.0);
    let amp = |f: f64| incl * (f / MERGER_F_PEAK).powf(2.0 / 3.0);
    let phase_k = 2.0 * PI * MERGER_F_LOW * tau0.powf(3.0 / 8.0) * 1.6;
    let phase = |tau: f64| -phase_k * (tau.powf(0.625) - tau_m.powf(0.625));
    let taper_len = 2.0 / MERGER_F_LOW;

    // ringdown matched in value and slope at the merger
    let a_m = amp(MERGER_F_PEAK);
    let slope_m = a_m / (4.0 * tau_m);
    let b_cos = a_m;
    let b_sin = -(slope_m + a_m / tau_r) / (2.0 * PI * MERGER_F_PEAK);

    Ok(grid
        .times()
        .map(|t| {
            let dt = t - grid.t0;
            if dt <= 0.0 {
                let tau = tau_m - dt;
                if tau > tau0 {
                    return 0.0;
                }
                let since_start = tau0 - tau;
                let taper = if since_start < taper_len {
                    0.5 * (1.0 - (PI * since_start / taper_len).cos())
                } else {
                    1.0
                };
                taper * amp(freq(tau)) * phase(tau).cos()
            } else {
                let w = 2.0 * PI * MERGER_F_PEAK * dt;
                (-dt / tau_r).exp() * (b_cos * w.cos() - b_sin * w.sin())
            }
        })
        .collect())
}

/// Parameters of surrogate supernova model `id`: (dip width, oscillation
/// frequency, damping time).
pub fn supernova_surrogate_params(model_id: u32) -> Result<(f64, f64, f64)> {
    let id = model_id as usize;
    if id >= SUPERNOVA_SURROGATE_MODELS {
        return Err(Error::domain(format!(
            "surrogate supernova model id {model_id} outside 0..{SUPERNOVA_SURROGATE_MODELS}"
        )));
    }
    let width = 0.5e-3 * 10f64.powf((id % 13) as f64 / 12.0);
    let freq = 100.0 + 700.0 * (id / 13) as f64 / 5.0;
    let golden = 0.618_033_988_749_895;
    let damping = 5e-3 + 25e-3 * ((id + 1) as f64 * golden).fract();
    Ok((width, freq, damping))
}

fn supernova_surrogate(grid: &TimeGrid, model_id: u32) -> Result<Vec<f64>> {
    let (width, freq, damping) = supernova_surrogate_params(model_id)?;
    check_support(
        grid,
        gaussian_halfwidth(width),
        damping * (1.0 / SUPPORT_LEVEL).ln(),
        "supernova",
    )?;
    Ok(grid
        .times()
        .map(|t| {
            let dt = t - grid.t0;
            let dip = -gaussian_envelope(dt, width);
            let ring = if dt >= 0.0 {
                0.6 * (2.0 * PI * freq * dt).sin() * (-dt / damping).exp()
            } else {
                0.0
            };
            dip + ring
        })
        .collect())
}

/// Hard-limits `sg` to `±clip_fraction * max|sg|`.
pub fn clip_blip(sg: &TimeSeries, clip_fraction: f64) -> Result<TimeSeries> {
    check_clip_fraction(clip_fraction)?;
    let level = clip_fraction * sg.peak();
    let samples = sg.samples.iter().map(|&v| v.clamp(-level, level)).collect();
    TimeSeries::new(samples, sg.grid)
}

/// One supernova template, already resampled to the working rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SupernovaTemplate {
    pub model_id: u32,
    pub sample_rate: f64,
    pub samples: Vec<f64>,
}

impl SupernovaTemplate {
    /// Copies the template onto `grid` with its largest-magnitude sample at
    /// `t0`, truncating whatever falls outside the window.
    fn place_on(&self, grid: &TimeGrid) -> Vec<f64> {
        let n = grid.n_samples;
        let mut out = vec![0.0; n];
        let peak_idx = self
            .samples
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) })
            .0 as isize;
        let center = (grid.t0 * grid.sample_rate).round() as isize;
        for (i, &v) in self.samples.iter().enumerate() {
            let j = center + i as isize - peak_idx;
            if (0..n as isize).contains(&j) {
                out[j as usize] = v;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupernovaCatalog {
    templates: Vec<SupernovaTemplate>,
}

impl SupernovaCatalog {
    pub fn from_templates(templates: Vec<SupernovaTemplate>) -> Result<Self> {
        if templates.is_empty() {
            return Err(Error::domain("supernova catalog is empty"));
        }
        Ok(Self { templates })
    }

    /// The built-in analytic family rendered on `grid`.
    pub fn surrogate(grid: &TimeGrid) -> Result<Self> {
        let templates = (0..SUPERNOVA_SURROGATE_MODELS as u32)
            .map(|id| {
                Ok(SupernovaTemplate {
                    model_id: id,
                    sample_rate: grid.sample_rate,
                    samples: supernova_surrogate(grid, id)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_templates(templates)
    }

    /// Loads `path` when given, otherwise falls back to the surrogate family.
    pub fn load_or_surrogate(path: Option<&Path>, grid: &TimeGrid) -> Result<Self> {
        match path {
            Some(p) => load_supernova_catalog(p, grid),
            None => Self::surrogate(grid),
        }
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&SupernovaTemplate> {
        self.templates.get(index)
    }

    pub fn templates(&self) -> &[SupernovaTemplate] {
        &self.templates
    }
}

/// Linear-interpolation resampling. The output covers the same time span,
/// `floor(len * to / from)` samples long.
pub fn resample(samples: &[f64], from_rate: f64, to_rate: f64) -> Vec<f64> {
    if samples.is_empty() || from_rate == to_rate {
        return samples.to_vec();
    }
    let n_out = ((samples.len() as f64) * to_rate / from_rate).floor() as usize;
    let ratio = from_rate / to_rate;
    (0..n_out)
        .map(|k| {
            let pos = k as f64 * ratio;
            let i = pos.floor() as usize;
            let frac = pos - i as f64;
            match samples.get(i + 1) {
                Some(&next) if frac > 0.0 => samples[i] * (1.0 - frac) + next * frac,
                _ => samples[i.min(samples.len() - 1)],
            }
        })
        .collect()
}

/// Parses a plain-text catalog: `model_id sample_rate v0 v1 ...` per line,
/// `#` comments and blank lines ignored. Templates are resampled to
/// `grid.sample_rate`.
pub fn load_supernova_catalog(path: &Path, grid: &TimeGrid) -> Result<SupernovaCatalog> {
    let text = std::fs::read_to_string(path)?;
    parse_supernova_catalog(&text, grid)
}

pub fn parse_supernova_catalog(text: &str, grid: &TimeGrid) -> Result<SupernovaCatalog> {
    let mut templates = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |msg: String| Error::Parse { line: line_no, msg };
        let mut fields = trimmed.split_whitespace();
        let model_id: u32 = fields
            .next()
            .unwrap()
            .parse()
            .map_err(|e| err(format!("bad model id: {e}")))?;
        let rate: f64 = fields
            .next()
            .ok_or_else(|| err("missing sample rate".into()))?
            .parse()
            .map_err(|e| err(format!("bad sample rate: {e}")))?;
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(err(format!("sample rate must be positive, got {rate}")));
        }
        let values = fields
            .map(|f| {
                let v: f64 = f.parse().map_err(|e| err(format!("bad sample '{f}': {e}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(err(format!("non-finite sample '{f}'")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.is_empty() {
            return Err(err("template has no samples".into()));
        }
        templates.push(SupernovaTemplate {
            model_id,
            sample_rate: grid.sample_rate,
            samples: resample(&values, rate, grid.sample_rate),
        });
    }
    SupernovaCatalog::from_templates(templates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn grid() -> TimeGrid {
        TimeGrid::default()
    }

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(1000, 4096.0, 0.1).is_err());
        assert!(TimeGrid::new(1024, 0.0, 0.1).is_err());
        assert!(TimeGrid::new(1024, 4096.0, 0.25).is_err());
        assert!(TimeGrid::new(1024, 4096.0, 0.0).is_ok());
        assert_eq!(TimeGrid::centered(1024, 4096.0).unwrap(), TimeGrid::default());
    }

    #[test]
    fn class_codes_follow_index_table() {
        for (i, c) in TransientClass::ALL.iter().enumerate() {
            assert_eq!(c.code() as usize, i);
            assert_eq!(TransientClass::from_code(i as u8).unwrap(), *c);
        }
        assert_eq!(TransientClass::Ringdown.code(), 0);
        assert_eq!(TransientClass::Supernova.code(), 7);
        assert!(TransientClass::from_code(8).is_err());
        let json = serde_json::to_string(&TransientClass::Blip).unwrap();
        assert_eq!(serde_json::from_str::<TransientClass>(&json).unwrap(), TransientClass::Blip);
    }

    #[test]
    fn gaussian_tau_from_list() {
        for seed in 0..200 {
            let mut rng = rng_from_seed(seed);
            match sample_params(TransientClass::Gaussian, &mut rng) {
                WaveformParams::Gaussian { tau } => assert!(GAUSSIAN_TAUS.contains(&tau)),
                p => panic!("wrong tag {p:?}"),
            }
        }
    }

    #[test]
    fn sine_gaussian_and_ringdown_tau_rules() {
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            match sample_params(TransientClass::SineGaussian, &mut rng) {
                WaveformParams::SineGaussian { f0, tau } => {
                    assert_eq!(tau, 2.0 / f0);
                    assert!((100.0..=2000.0).contains(&f0));
                }
                p => panic!("wrong tag {p:?}"),
            }
            match sample_params(TransientClass::Ringdown, &mut rng) {
                WaveformParams::Ringdown { f0, tau } => {
                    assert_eq!(tau, 4.0 / f0);
                    assert!((100.0..=2000.0).contains(&f0));
                }
                p => panic!("wrong tag {p:?}"),
            }
        }
    }

    #[test]
    fn merger_params_within_range() {
        let mut rng = rng_from_seed(11);
        let (mut cmin, mut cmax, mut imin, mut imax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for _ in 0..1_000_000 {
            if let WaveformParams::BlackHoleMerger { chirp_mass, cos_iota } =
                sample_params(TransientClass::BlackHoleMerger, &mut rng)
            {
                cmin = cmin.min(chirp_mass);
                cmax = cmax.max(chirp_mass);
                imin = imin.min(cos_iota);
                imax = imax.max(cos_iota);
            }
        }
        assert!(cmin >= 20.0 && cmax <= 50.0);
        assert!(imin >= 0.0 && imax <= 1.0);
    }

    #[test]
    fn all_sampled_params_synthesize() {
        let g = grid();
        let mut rng = rng_from_seed(5);
        for class in TransientClass::ALL {
            for _ in 0..50 {
                let p = sample_params(class, &mut rng);
                assert_eq!(p.class(), class);
                let s = synthesize(class, &p, &g).unwrap();
                assert_eq!(s.len(), g.n_samples);
                assert!(s.peak() > 0.0, "{class} {p:?}");
            }
        }
    }

    #[test]
    fn gaussian_one_tau_away() {
        // 4000 Hz puts t0 + 1 ms on sample 516
        let g = TimeGrid::centered(1024, 4000.0).unwrap();
        let s = synthesize(TransientClass::Gaussian, &WaveformParams::Gaussian { tau: 0.001 }, &g).unwrap();
        assert!((s.samples[516] - 0.367879).abs() < 1e-6);
        assert!((s.samples[516] - (-1.0f64).exp()).abs() < 1e-12);
        assert_eq!(s.samples[512], 1.0);
    }

    #[test]
    fn ringdown_is_causal() {
        let g = grid();
        let s = synthesize(TransientClass::Ringdown, &WaveformParams::Ringdown { f0: 150.0, tau: 4.0 / 150.0 }, &g)
            .unwrap();
        assert!(s.samples[..512].iter().all(|&v| v == 0.0));
        assert_eq!(s.samples[512], 1.0);
    }

    #[test]
    fn sine_gaussian_zero_at_t0() {
        let s = synthesize(
            TransientClass::SineGaussian,
            &WaveformParams::SineGaussian { f0: 300.0, tau: 2.0 / 300.0 },
            &grid(),
        )
        .unwrap();
        assert_eq!(s.samples[512], 0.0);
    }

    #[test]
    fn csg_value_at_t0() {
        let s = synthesize(
            TransientClass::ChirpingSineGaussian,
            &WaveformParams::ChirpingSineGaussian { f0: 50.0, alpha: 20.0, tau: 0.025 },
            &grid(),
        )
        .unwrap();
        // (2*pi*0.025^2)^(-1/4), evaluated at 30 digits
        assert!((s.samples[512] - 3.994_707_901_218_474_2).abs() < 1e-12);
    }

    #[test]
    fn tag_mismatch_rejected() {
        let r = synthesize(TransientClass::Cusp, &WaveformParams::Gaussian { tau: 0.001 }, &grid());
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn too_short_grid_rejected() {
        let g = TimeGrid::centered(64, 4096.0).unwrap();
        let r = synthesize(TransientClass::Gaussian, &WaveformParams::Gaussian { tau: 0.05 }, &g);
        assert!(matches!(r, Err(Error::Domain(_))));
    }

    #[test]
    fn clip_blip_limits() {
        let g = grid();
        let constant = TimeSeries::new(vec![2.0; g.n_samples], g).unwrap();
        let c = clip_blip(&constant, 0.5).unwrap();
        assert!(c.samples.iter().all(|v| v.abs() <= 1.0));
        assert!(clip_blip(&constant, 0.0).is_err());
        assert!(clip_blip(&constant, 1.0).is_err());

        let sg = synthesize(
            TransientClass::SineGaussian,
            &WaveformParams::SineGaussian { f0: 400.0, tau: 0.005 },
            &g,
        )
        .unwrap();
        let near_one = clip_blip(&sg, 1.0 - 1e-15).unwrap();
        for (a, b) in near_one.samples.iter().zip(&sg.samples) {
            assert!((a - b).abs() <= 1e-14);
        }
    }

    #[test]
    fn clip_saturation_matches_scan() {
        let g = grid();
        let sg = synthesize(
            TransientClass::SineGaussian,
            &WaveformParams::SineGaussian { f0: 400.0, tau: 0.005 },
            &g,
        )
        .unwrap()
        .normalize_peak();
        let clipped = clip_blip(&sg, 0.3).unwrap();
        let level = 0.3 * sg.peak();
        let mut expected = 0;
        for v in &sg.samples {
            if v.abs() >= level {
                expected += 1;
            }
        }
        let saturated = clipped.samples.iter().filter(|v| v.abs() == level).count();
        assert_eq!(saturated, expected);
        assert!((clipped.peak() - level).abs() < 1e-15);
    }

    #[test]
    fn merger_is_continuous_at_merger() {
        let g = TimeGrid::centered(8192, 32768.0).unwrap();
        let s = merger(&g, 30.0, 0.5).unwrap();
        let i = g.n_samples / 2;
        let jump = (s[i + 1] - s[i]).abs();
        let typical = (s[i] - s[i - 1]).abs();
        assert!(jump < 4.0 * typical + 1e-3, "jump {jump} typical {typical}");
        assert!(s.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn merger_rejects_out_of_range_mass() {
        let p = WaveformParams::BlackHoleMerger { chirp_mass: 10.0, cos_iota: 0.5 };
        assert!(synthesize(TransientClass::BlackHoleMerger, &p, &grid()).is_err());
    }

    #[test]
    fn surrogate_family_has_78_members() {
        let cat = SupernovaCatalog::load_or_surrogate(None, &grid()).unwrap();
        assert_eq!(cat.len(), 78);
        let ids: std::collections::BTreeSet<_> =
            (0..78).map(|i| format!("{:?}", supernova_surrogate_params(i).unwrap())).collect();
        assert_eq!(ids.len(), 78, "surrogate parameters must be distinct");
        assert!(supernova_surrogate_params(78).is_err());
    }

    #[test]
    fn catalog_parse_and_resample() {
        let g = grid();
        let vals: Vec<String> = (0..64).map(|i| format!("{}", (i as f64 * 0.1).sin())).collect();
        let text = format!("# header\n\n3 16384 {}\n5 4096 1.0 -2.0 0.5\n", vals.join(" "));
        let cat = parse_supernova_catalog(&text, &g).unwrap();
        assert_eq!(cat.len(), 2);
        assert_eq!(cat.get(0).unwrap().samples.len(), 16);
        assert_eq!(cat.get(0).unwrap().model_id, 3);
        assert_eq!(cat.get(1).unwrap().samples, vec![1.0, -2.0, 0.5]);

        let synth = Synthesizer::new(g).with_catalog(Arc::new(cat));
        let s = synth.synthesize(TransientClass::Supernova, &WaveformParams::Supernova { model_id: 1 }).unwrap();
        assert_eq!(s.samples[512], -2.0);
        assert_eq!(s.samples[511], 1.0);
        assert!(synth
            .synthesize(TransientClass::Supernova, &WaveformParams::Supernova { model_id: 2 })
            .is_err());
    }

    #[test]
    fn catalog_errors_name_line() {
        let g = grid();
        match parse_supernova_catalog("# c\n1 4096 1.0 2.0\n2 4096 1.0 x\n", &g) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
        assert!(matches!(parse_supernova_catalog("# only comments\n", &g), Err(Error::Domain(_))));
        assert!(matches!(parse_supernova_catalog("1 4096\n", &g), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn resample_by_integer_factor() {
        let x: Vec<f64> = (0..16384).map(|i| i as f64).collect();
        let y = resample(&x, 16384.0, 4096.0);
        assert_eq!(y.len(), 4096);
        assert_eq!(y[10], 40.0);
    }

    #[test]
    fn slots_round_trip() {
        let mut rng = rng_from_seed(1);
        for class in TransientClass::ALL {
            let p = sample_params(class, &mut rng);
            assert_eq!(WaveformParams::from_slots(class, &p.to_slots()).unwrap(), p);
        }
    }
}
