//! Labeled dataset generation, stratified hold-out split and persistence.
//!
//! Each example is produced independently from a seed derived from
//! `(master_seed, class, index)`: sample parameters, synthesize, normalize to
//! unit peak, scale to the drawn SNR, add unit white noise, whiten against a
//! PSD estimated once per build, then standardize to zero mean and unit
//! variance. Examples are stored class-major.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::noise::{self, NoiseModel, PsdEstimate};
use crate::rng::{mix_seed, rng_from, rng_from_seed};
use crate::waveforms::{
    sample_params_with_catalog, SupernovaCatalog, Synthesizer, TimeGrid, TimeSeries, TransientClass,
    WaveformParams,
};

pub const DATASET_MAGIC: &[u8; 4] = b"GWTD";
pub const DATASET_VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8 + 8;
/// Length of the noise-only stream used to estimate the whitening PSD.
pub const PSD_STREAM_LEN: usize = 1 << 20;
/// Stream tag mixed into the master seed for the PSD noise stream.
const PSD_STREAM_TAG: u64 = 0x5053_445F_4E4F_4953;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    /// Whitened, standardized strain window.
    pub x: Vec<f32>,
    pub label: TransientClass,
    pub target_snr: f64,
    pub params: WaveformParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub examples: Vec<LabeledExample>,
    pub grid: TimeGrid,
    pub master_seed: u64,
    pub per_class: usize,
}

impl Dataset {
    /// Wraps `examples`, checking exact class balance and window length.
    pub fn new(examples: Vec<LabeledExample>, grid: TimeGrid, master_seed: u64) -> Result<Self> {
        let mut counts = [0usize; TransientClass::COUNT];
        for (i, ex) in examples.iter().enumerate() {
            if ex.x.len() != grid.n_samples {
                return Err(Error::domain(format!(
                    "example {i} has {} samples, grid expects {}",
                    ex.x.len(),
                    grid.n_samples
                )));
            }
            counts[ex.label.code() as usize] += 1;
        }
        let per_class = counts[0];
        if counts.iter().any(|&c| c != per_class) {
            return Err(Error::domain(format!("classes are not balanced: {counts:?}")));
        }
        Ok(Self { examples, grid, master_seed, per_class })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.grid.n_samples
    }

    pub fn labels(&self) -> Vec<u8> {
        self.examples.iter().map(|e| e.label.code()).collect()
    }

    /// Row-major `len × n_samples` feature matrix in f64.
    pub fn feature_matrix(&self) -> Vec<f64> {
        self.examples.iter().flat_map(|e| e.x.iter().map(|&v| v as f64)).collect()
    }

    pub fn label_histogram(&self) -> [usize; TransientClass::COUNT] {
        let mut h = [0; TransientClass::COUNT];
        for e in &self.examples {
            h[e.label.code() as usize] += 1;
        }
        h
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub per_class: usize,
    pub snr_min: f64,
    pub snr_max: f64,
    pub grid: TimeGrid,
    pub master_seed: u64,
    pub supernova_catalog: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            per_class: 800,
            snr_min: 5.0,
            snr_max: 25.0,
            grid: TimeGrid::default(),
            master_seed: 42,
            supernova_catalog: None,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.per_class < 1 {
            return Err(Error::domain("per_class must be at least 1"));
        }
        if !(self.snr_min > 0.0 && self.snr_min <= self.snr_max && self.snr_max.is_finite()) {
            return Err(Error::domain(format!(
                "need 0 < snr_min <= snr_max, got [{}, {}]",
                self.snr_min, self.snr_max
            )));
        }
        TimeGrid::new(self.grid.n_samples, self.grid.sample_rate, self.grid.t0)?;
        Ok(())
    }
}

/// Seed of example `index` of `class`.
pub fn example_seed(master_seed: u64, class: TransientClass, index: usize) -> u64 {
    mix_seed(&[master_seed, class.code() as u64, index as u64])
}

/// Everything needed to produce any single example of a configured build.
#[derive(Debug, Clone)]
pub struct Generator {
    config: DatasetConfig,
    synth: Synthesizer,
    psd: PsdEstimate,
    noise: NoiseModel,
}

/// Intermediate products of one injection, before whitening.
#[derive(Debug, Clone)]
pub struct Injection {
    pub params: WaveformParams,
    pub target_snr: f64,
    /// Unit-peak template scaled to `target_snr`.
    pub signal: TimeSeries,
    pub noise: TimeSeries,
}

impl Generator {
    pub fn new(config: DatasetConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid;
        let mut synth = Synthesizer::new(grid);
        if let Some(path) = &config.supernova_catalog {
            let catalog = SupernovaCatalog::load_or_surrogate(Some(path), &grid)?;
            synth = synth.with_catalog(Arc::new(catalog));
        }
        let noise = NoiseModel::default();
        let mut rng = rng_from(&[config.master_seed, PSD_STREAM_TAG]);
        let stream = noise::white_noise(PSD_STREAM_LEN.max(grid.n_samples), noise.sigma, &mut rng)?;
        let psd = noise::welch(&stream, grid.sample_rate, grid.n_samples)?.floored();
        Ok(Self { config, synth, psd, noise })
    }

    pub fn config(&self) -> &DatasetConfig {
        &self.config
    }

    pub fn psd(&self) -> &PsdEstimate {
        &self.psd
    }

    pub fn inject(&self, class: TransientClass, index: usize) -> Result<Injection> {
        let cfg = &self.config;
        let mut rng = rng_from_seed(example_seed(cfg.master_seed, class, index));
        let params = sample_params_with_catalog(class, self.synth.supernova_models(), &mut rng);
        let template = self.synth.synthesize(class, &params)?.normalize_peak();
        let target_snr = if cfg.snr_max > cfg.snr_min {
            rng.random_range(cfg.snr_min..cfg.snr_max)
        } else {
            cfg.snr_min
        };
        let signal = noise::scale_to_snr(&template, target_snr, &self.noise)?;
        let noise = noise::white_noise_series(&cfg.grid, self.noise.sigma, &mut rng)?;
        Ok(Injection { params, target_snr, signal, noise })
    }

    pub fn example(&self, class: TransientClass, index: usize) -> Result<LabeledExample> {
        let inj = self.inject(class, index)?;
        let noisy: Vec<f64> =
            inj.signal.samples.iter().zip(&inj.noise.samples).map(|(s, n)| s + n).collect();
        let white = noise::whiten(&TimeSeries::new(noisy, self.config.grid)?, &self.psd)?;
        let x = standardize(&white.samples)?.into_iter().map(|v| v as f32).collect();
        Ok(LabeledExample { x, label: class, target_snr: inj.target_snr, params: inj.params })
    }
}

/// Zero-mean, unit-variance copy (population variance).
pub fn standardize(x: &[f64]) -> Result<Vec<f64>> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if !(var > 0.0 && var.is_finite()) {
        return Err(Error::Numerical(format!("cannot standardize: variance {var}")));
    }
    let sd = var.sqrt();
    Ok(x.iter().map(|v| (v - mean) / sd).collect())
}

/// Builds the full dataset, generating examples in parallel.
pub fn build_dataset(config: &DatasetConfig) -> Result<Dataset> {
    let generator = Generator::new(config.clone())?;
    let jobs: Vec<(TransientClass, usize)> = TransientClass::ALL
        .iter()
        .flat_map(|&c| (0..config.per_class).map(move |i| (c, i)))
        .collect();
    let examples = jobs
        .par_iter()
        .map(|&(c, i)| generator.example(c, i))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(examples, config.grid, config.master_seed)
}

/// Stratified hold-out split. Each class contributes
/// `floor(train_fraction * count)` shuffled examples to the training side.
pub fn holdout_split(ds: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::domain(format!("train fraction must lie in (0, 1), got {train_fraction}")));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in TransientClass::ALL {
        let mut idx: Vec<usize> =
            (0..ds.len()).filter(|&i| ds.examples[i].label == class).collect();
        let n_train = (train_fraction * idx.len() as f64).floor() as usize;
        if n_train == 0 || n_train == idx.len() {
            return Err(Error::domain(format!(
                "split {train_fraction} of {} {} examples leaves an empty side",
                idx.len(),
                class
            )));
        }
        idx.shuffle(&mut rng_from(&[seed, class.code() as u64]));
        train.extend(idx[..n_train].iter().map(|&i| ds.examples[i].clone()));
        test.extend(idx[n_train..].iter().map(|&i| ds.examples[i].clone()));
    }
    Ok((
        Dataset::new(train, ds.grid, ds.master_seed)?,
        Dataset::new(test, ds.grid, ds.master_seed)?,
    ))
}

pub fn record_len(n_samples: usize) -> usize {
    1 + 8 + 1 + 6 * 8 + 4 * n_samples
}

/// Serializes `ds` into the little-endian `GWTD` layout.
pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let n = ds.grid.n_samples;
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * record_len(n));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&ds.grid.sample_rate.to_le_bytes());
    out.extend_from_slice(&ds.master_seed.to_le_bytes());
    for ex in &ds.examples {
        out.push(ex.label.code());
        out.extend_from_slice(&ex.target_snr.to_le_bytes());
        out.push(ex.params.class().code());
        for v in ex.params.to_slots() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &ex.x {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_dataset(ds))?;
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn err(&self, at: usize, msg: impl Into<String>) -> Error {
        Error::Format { offset: at as u64, msg: msg.into() }
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4, "magic")? != DATASET_MAGIC {
        return Err(c.err(0, "bad magic, expected GWTD"));
    }
    let version = c.u16("version")?;
    if version != DATASET_VERSION {
        return Err(c.err(4, format!("unsupported version {version}")));
    }
    let n_examples = c.u32("n_examples")? as usize;
    let n_samples = c.u32("n_samples")? as usize;
    let rate = c.f64("sample_rate")?;
    let seed = c.u64("master_seed")?;
    let grid = TimeGrid::centered(n_samples, rate).map_err(|e| c.err(10, e.to_string()))?;
    let expected = HEADER_LEN + n_examples * record_len(n_samples);
    if bytes.len() < expected {
        return Err(c.err(bytes.len(), format!("truncated: expected {expected} bytes")));
    }
    if bytes.len() > expected {
        return Err(c.err(expected, "trailing bytes after last record"));
    }
    let mut examples = Vec::with_capacity(n_examples);
    for _ in 0..n_examples {
        let at = c.pos;
        let label = TransientClass::from_code(c.u8("label")?).map_err(|e| c.err(at, e.to_string()))?;
        let target_snr = c.f64("target_snr")?;
        let tag_at = c.pos;
        let tag = TransientClass::from_code(c.u8("params tag")?)
            .map_err(|e| c.err(tag_at, e.to_string()))?;
        let mut slots = [0.0; 6];
        for s in slots.iter_mut() {
            *s = c.f64("params")?;
        }
        let params = WaveformParams::from_slots(tag, &slots).map_err(|e| c.err(tag_at, e.to_string()))?;
        let raw = c.take(4 * n_samples, "samples")?;
        let x = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        examples.push(LabeledExample { x, label, target_snr, params });
    }
    Dataset::new(examples, grid, seed).map_err(|e| c.err(HEADER_LEN, e.to_string()))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_dataset(&bytes)
}

/// `%.{sig}g`-style formatting: shortest of fixed/scientific with `sig`
/// significant digits and trailing zeros removed.
pub fn format_sig(v: f64, sig: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let sci = format!("{:.*e}", sig - 1, v);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -5 || exp >= sig as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes `label,snr,s0,...,s{n-1}` rows with 9 significant digits.
pub fn export_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "label,snr")?;
    for i in 0..ds.grid.n_samples {
        write!(w, ",s{i}")?;
    }
    writeln!(w)?;
    for ex in &ds.examples {
        write!(w, "{},{}", ex.label.code(), format_sig(ex.target_snr, 9))?;
        for &v in &ex.x {
            write!(w, ",{}", format_sig(v as f64, 9))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(per_class: usize) -> DatasetConfig {
        DatasetConfig { per_class, master_seed: 7, ..DatasetConfig::default() }
    }

    #[test]
    fn one_per_class_in_order() {
        let ds = build_dataset(&small_config(1)).unwrap();
        assert_eq!(ds.len(), 8);
        for (i, ex) in ds.examples.iter().enumerate() {
            assert_eq!(ex.label.code() as usize, i);
            assert!((5.0..=25.0).contains(&ex.target_snr));
            assert!(ex.x.iter().all(|v| v.is_finite()));
        }
        assert_eq!(ds.per_class, 1);
    }

    #[test]
    fn config_validation() {
        let mut c = small_config(1);
        c.snr_min = 25.0;
        c.snr_max = 5.0;
        assert!(build_dataset(&c).is_err());
        c = small_config(0);
        assert!(build_dataset(&c).is_err());
    }

    #[test]
    fn standardize_moments() {
        let s = standardize(&[1.0, 2.0, 3.0, 10.0]).unwrap();
        let m = s.iter().sum::<f64>() / 4.0;
        let v = s.iter().map(|x| x * x).sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-15);
        assert!((v - 1.0).abs() < 1e-12);
        assert!(standardize(&[2.0, 2.0]).is_err());
    }

    #[test]
    fn split_sizes() {
        let ds = build_dataset(&small_config(10)).unwrap();
        let (tr, te) = holdout_split(&ds, 0.8, 1).unwrap();
        assert_eq!(tr.per_class, 8);
        assert_eq!(te.per_class, 2);
        let (tr, te) = holdout_split(&build_dataset(&small_config(2)).unwrap(), 0.5, 1).unwrap();
        assert_eq!((tr.per_class, te.per_class), (1, 1));
        assert!(holdout_split(&build_dataset(&small_config(1)).unwrap(), 0.5, 1).is_err());
        assert!(holdout_split(&ds, 1.0, 1).is_err());
    }

    #[test]
    fn header_counts_examples() {
        let ds = build_dataset(&small_config(1)).unwrap();
        let bytes = encode_dataset(&ds);
        assert_eq!(&bytes[..4], b"GWTD");
        assert_eq!(u16::from_le_bytes([bytes[4], bytes[5]]), 1);
        assert_eq!(u32::from_le_bytes(bytes[6..10].try_into().unwrap()), 8);
        assert_eq!(u32::from_le_bytes(bytes[10..14].try_into().unwrap()), 1024);
        assert_eq!(bytes.len(), HEADER_LEN + 8 * record_len(1024));
    }

    #[test]
    fn decode_errors_carry_offsets() {
        let ds = build_dataset(&small_config(1)).unwrap();
        let bytes = encode_dataset(&ds);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode_dataset(&bad), Err(Error::Format { offset: 4, .. })));
        let cut = &bytes[..bytes.len() - 100];
        match decode_dataset(cut) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, cut.len()),
            other => panic!("expected truncation error, got {other:?}"),
        }
        assert!(decode_dataset(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[HEADER_LEN] = 12;
        assert!(matches!(decode_dataset(&bad), Err(Error::Format { .. })));
    }

    #[test]
    fn sig_formatting() {
        assert_eq!(format_sig(1.0, 9), "1");
        assert_eq!(format_sig(-0.5, 9), "-0.5");
        assert_eq!(format_sig(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(format_sig(12345.678901234, 9), "12345.6789");
        assert_eq!(format_sig(1.5e-7, 9), "1.5e-07");
        assert_eq!(format_sig(2.0e12, 9), "2e+12");
        assert_eq!(format_sig(0.0, 9), "0");
    }

    #[test]
    fn empty_csv_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let ds = Dataset { examples: vec![], grid: TimeGrid::default(), master_seed: 0, per_class: 0 };
        export_csv(&ds, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("label,snr,s0,s1,"));
        assert!(text.trim_end().ends_with(",s1023"));
    }
}
