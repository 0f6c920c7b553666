//! Unsupervised preprocessing stages: total-variation denoising, PCA and
//! the orthonormal Haar wavelet transform, plus the fitted pipeline that
//! applies one of them ahead of a classifier.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exact minimizer of `½‖y − x‖² + λ Σ|y[i+1] − y[i]|`.
///
/// Direct (non-iterative) taut-string algorithm of Condat, linear in the
/// typical case.
pub fn tv_denoise(x: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::domain(format!("TV weight must be nonnegative, got {lambda}")));
    }
    let n = x.len();
    if n == 0 || lambda == 0.0 {
        return Ok(x.to_vec());
    }
    let mut out = vec![0.0; n];
    let (mut k, mut k0, mut kminus, mut kplus) = (0usize, 0usize, 0usize, 0usize);
    let mut umin = lambda;
    let mut umax = -lambda;
    let mut vmin = x[0] - lambda;
    let mut vmax = x[0] + lambda;
    let twolambda = 2.0 * lambda;
    loop {
        while k == n - 1 {
            if umin < 0.0 {
                while k0 <= kminus {
                    out[k0] = vmin;
                    k0 += 1;
                }
                k = k0;
                kminus = k0;
                vmin = x[k0];
                umin = lambda;
                umax = vmin + umin - vmax;
            } else if umax > 0.0 {
                while k0 <= kplus {
                    out[k0] = vmax;
                    k0 += 1;
                }
                k = k0;
                kplus = k0;
                vmax = x[k0];
                umax = -lambda;
                umin = vmax + umax - vmin;
            } else {
                vmin += umin / (k - k0 + 1) as f64;
                while k0 <= k {
                    out[k0] = vmin;
                    k0 += 1;
                }
                return Ok(out);
            }
        }
        umin += x[k + 1] - vmin;
        if umin < -lambda {
            while k0 <= kminus {
                out[k0] = vmin;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmin = x[k0];
            vmax = vmin + twolambda;
            umin = lambda;
            umax = -lambda;
            continue;
        }
        umax += x[k + 1] - vmax;
        if umax > lambda {
            while k0 <= kplus {
                out[k0] = vmax;
                k0 += 1;
            }
            k = k0;
            kminus = k0;
            kplus = k0;
            vmax = x[k0];
            vmin = vmax - twolambda;
            umin = lambda;
            umax = -lambda;
        } else {
            k += 1;
            if umin >= lambda {
                kminus = k;
                vmin += (umin - lambda) / (kminus - k0 + 1) as f64;
                umin = lambda;
            }
            if umax <= -lambda {
                kplus = k;
                vmax += (umax + lambda) / (kplus - k0 + 1) as f64;
                umax = -lambda;
            }
        }
    }
}

/// Value of the TV objective, for checking minimizers.
pub fn tv_objective(y: &[f64], x: &[f64], lambda: f64) -> f64 {
    let fid: f64 = y.iter().zip(x).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    let tv: f64 = y.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    fid + lambda * tv
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `k` orthonormal rows of length `n_features`.
    pub components: Vec<Vec<f64>>,
    /// Sample-covariance eigenvalues, nonincreasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean.len() {
            return Err(Error::domain(format!(
                "PCA input has {} features, model expects {}",
                x.len(),
                self.mean.len()
            )));
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(x.iter().zip(&self.mean)).map(|(w, (v, m))| w * (v - m)).sum())
            .collect())
    }

    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        if coeffs.len() != self.k() {
            return Err(Error::domain(format!("expected {} coefficients, got {}", self.k(), coeffs.len())));
        }
        let mut out = self.mean.clone();
        for (c, comp) in coeffs.iter().zip(&self.components) {
            for (o, w) in out.iter_mut().zip(comp) {
                *o += c * w;
            }
        }
        Ok(out)
    }
}

/// Fits the top-`k` principal axes of the row-major `rows × cols` matrix.
pub fn pca_fit(x: &[f64], rows: usize, cols: usize, k: usize) -> Result<PcaModel> {
    if x.len() != rows * cols {
        return Err(Error::domain(format!("matrix buffer {} != {rows}x{cols}", x.len())));
    }
    if rows < 2 {
        return Err(Error::domain("PCA needs at least two rows"));
    }
    if k == 0 || k > rows.min(cols) {
        return Err(Error::domain(format!("k={k} outside 1..={}", rows.min(cols))));
    }
    let mut mean = vec![0.0; cols];
    for r in x.chunks_exact(cols) {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= rows as f64);
    let centered = DMatrix::from_row_iterator(
        rows,
        cols,
        x.chunks_exact(cols).flat_map(|r| r.iter().zip(&mean).map(|(v, m)| v - m)),
    );
    let cov = (centered.transpose() * &centered) / (rows as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut components = Vec::with_capacity(k);
    let mut explained_variance = Vec::with_capacity(k);
    for &j in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        let lead = v.iter().copied().fold(0.0f64, |best, a| if a.abs() > best.abs() { a } else { best });
        if lead < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        components.push(v);
        explained_variance.push(eig.eigenvalues[j].max(0.0));
    }
    Ok(PcaModel { mean, components, explained_variance })
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs {
    pub approximation: Vec<f64>,
    /// `details[0]` is the finest level.
    pub details: Vec<Vec<f64>>,
    pub levels: usize,
}

impl WaveletCoeffs {
    /// Approximation followed by details from coarsest to finest.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.approximation.clone();
        for d in self.details.iter().rev() {
            out.extend_from_slice(d);
        }
        out
    }
}

/// Multilevel orthonormal Haar analysis.
pub fn haar_dwt(x: &[f64], levels: usize) -> Result<WaveletCoeffs> {
    if levels == 0 || levels >= usize::BITS as usize || x.len() % (1usize << levels) != 0 || x.is_empty() {
        return Err(Error::domain(format!(
            "length {} is not divisible by 2^{levels} (levels must be >= 1)",
            x.len()
        )));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut approx = x.to_vec();
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d): (Vec<f64>, Vec<f64>) =
            approx.chunks_exact(2).map(|p| ((p[0] + p[1]) * s, (p[0] - p[1]) * s)).unzip();
        details.push(d);
        approx = a;
    }
    Ok(WaveletCoeffs { approximation: approx, details, levels })
}

pub fn haar_idwt(c: &WaveletCoeffs) -> Result<Vec<f64>> {
    if c.details.len() != c.levels {
        return Err(Error::domain("detail level count does not match levels"));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut approx = c.approximation.clone();
    for d in c.details.iter().rev() {
        if d.len() != approx.len() {
            return Err(Error::domain("inconsistent coefficient lengths"));
        }
        approx = approx
            .iter()
            .zip(d)
            .flat_map(|(a, d)| [(a + d) * s, (a - d) * s])
            .collect();
    }
    Ok(approx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    None,
    Tv,
    Pca,
    Dwt,
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(FeatureKind::None),
            "tv" => Ok(FeatureKind::Tv),
            "pca" => Ok(FeatureKind::Pca),
            "dwt" => Ok(FeatureKind::Dwt),
            other => Err(Error::domain(format!("unknown feature stage '{other}' (none|tv|pca|dwt)"))),
        }
    }
}

pub const DEFAULT_TV_LAMBDA: f64 = 0.5;
pub const DEFAULT_PCA_K: usize = 64;
pub const DEFAULT_DWT_LEVELS: usize = 5;

/// A fitted, immutable preprocessing stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeaturePipeline {
    Identity { width: usize },
    Tv { width: usize, lambda: f64 },
    Pca(PcaModel),
    Dwt { width: usize, levels: usize },
}

impl FeaturePipeline {
    /// Fits `kind` on the row-major training matrix using default settings.
    pub fn fit(kind: FeatureKind, x: &[f64], rows: usize, cols: usize) -> Result<Self> {
        Ok(match kind {
            FeatureKind::None => FeaturePipeline::Identity { width: cols },
            FeatureKind::Tv => FeaturePipeline::Tv { width: cols, lambda: DEFAULT_TV_LAMBDA },
            FeatureKind::Pca => FeaturePipeline::Pca(pca_fit(x, rows, cols, DEFAULT_PCA_K.min(rows.min(cols)))?),
            FeatureKind::Dwt => {
                haar_dwt(&vec![0.0; cols], DEFAULT_DWT_LEVELS)?;
                FeaturePipeline::Dwt { width: cols, levels: DEFAULT_DWT_LEVELS }
            }
        })
    }

    pub fn kind(&self) -> FeatureKind {
        match self {
            FeaturePipeline::Identity { .. } => FeatureKind::None,
            FeaturePipeline::Tv { .. } => FeatureKind::Tv,
            FeaturePipeline::Pca(_) => FeatureKind::Pca,
            FeaturePipeline::Dwt { .. } => FeatureKind::Dwt,
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            FeaturePipeline::Identity { width }
            | FeaturePipeline::Tv { width, .. }
            | FeaturePipeline::Dwt { width, .. } => *width,
            FeaturePipeline::Pca(m) => m.n_features(),
        }
    }

    pub fn output_width(&self) -> usize {
        match self {
            FeaturePipeline::Pca(m) => m.k(),
            other => other.input_width(),
        }
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_width() {
            return Err(Error::domain(format!(
                "feature stage expects width {}, got {}",
                self.input_width(),
                x.len()
            )));
        }
        match self {
            FeaturePipeline::Identity { .. } => Ok(x.to_vec()),
            FeaturePipeline::Tv { lambda, .. } => tv_denoise(x, *lambda),
            FeaturePipeline::Pca(m) => m.project(x),
            FeaturePipeline::Dwt { levels, .. } => Ok(haar_dwt(x, *levels)?.flatten()),
        }
    }

    /// Transforms every row of a row-major matrix.
    pub fn transform_rows(&self, x: &[f64], cols: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(x.len() / cols.max(1) * self.output_width());
        for row in x.chunks_exact(cols) {
            out.extend(self.transform(row)?);
        }
        Ok(out)
    }
}
