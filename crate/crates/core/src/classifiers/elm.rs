//! Extreme learning machine: a fixed random tanh projection followed by a
//! ridge-regression readout onto one-hot targets.

use nalgebra::DMatrix;
use rand::Rng;

use super::CLASSES;
use crate::error::{Error, Result};
use crate::nn::gemm::{matmul, matmul_nt, matmul_tn};
use crate::rng::rng_from;

const TAG_PROJECTION: u64 = 0x656c_6d70;

#[derive(Debug, Clone, PartialEq)]
pub struct ElmModel {
    pub input: usize,
    pub hidden: usize,
    /// `input × hidden`, row-major.
    pub input_weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// `hidden × 8`, row-major.
    pub readout: Vec<f64>,
}

impl ElmModel {
    /// Seeded projection with an all-zero readout. Weights are uniform on
    /// `±sqrt(3/input)` (unit variance pre-activations for unit inputs),
    /// biases uniform on `±1`.
    pub fn projection(input: usize, hidden: usize, seed: u64) -> Self {
        let mut rng = rng_from(&[seed, TAG_PROJECTION]);
        let bound = (3.0 / input as f64).sqrt();
        let input_weights = (0..input * hidden).map(|_| rng.random_range(-bound..bound)).collect();
        let bias = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { input, hidden, input_weights, bias, readout: vec![0.0; hidden * CLASSES] }
    }

    /// Hidden activations `tanh(X W + b)`, `rows × hidden`.
    pub fn hidden_activations(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() % self.input != 0 {
            return Err(Error::domain(format!("ELM expects feature width {}", self.input)));
        }
        let rows = x.len() / self.input;
        let mut h = vec![0.0; rows * self.hidden];
        for r in h.chunks_exact_mut(self.hidden) {
            r.copy_from_slice(&self.bias);
        }
        matmul(rows, self.input, self.hidden, x, &self.input_weights, 1.0, &mut h);
        h.iter_mut().for_each(|v| *v = v.tanh());
        Ok(h)
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let h = self.hidden_activations(x)?;
        let rows = h.len() / self.hidden;
        let mut out = vec![0.0; rows * CLASSES];
        matmul(rows, self.hidden, CLASSES, &h, &self.readout, 0.0, &mut out);
        Ok(out)
    }
}

pub fn one_hot(labels: &[u8]) -> Vec<f64> {
    let mut y = vec![0.0; labels.len() * CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        y[i * CLASSES + l as usize] = 1.0;
    }
    y
}

/// Solves the symmetric positive-definite system `A X = B` (A `n×n`, B `n×m`,
/// both row-major). Cholesky first, LU if that fails.
fn solve_spd(a: &[f64], b: &[f64], n: usize, m: usize) -> Result<Vec<f64>> {
    let am = DMatrix::from_row_slice(n, n, a);
    let bm = DMatrix::from_row_slice(n, m, b);
    let sol = match am.clone().cholesky() {
        Some(ch) => ch.solve(&bm),
        None => am
            .lu()
            .solve(&bm)
            .ok_or_else(|| Error::Numerical("ELM readout system is singular".into()))?,
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("ELM readout solve produced non-finite values".into()));
    }
    let mut out = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            out[i * m + j] = sol[(i, j)];
        }
    }
    Ok(out)
}

/// Ridge readout `W = (HᵀH + μI)⁻¹ HᵀY`. When there are fewer rows than
/// hidden units the equivalent dual form `Hᵀ (HHᵀ + μI)⁻¹ Y` is solved
/// instead, which needs only an `rows × rows` system.
pub fn ridge_readout(h: &[f64], rows: usize, hidden: usize, y: &[f64], mu: f64) -> Result<Vec<f64>> {
    if rows < hidden {
        let mut g = vec![0.0; rows * rows];
        matmul_nt(rows, hidden, rows, h, h, 0.0, &mut g);
        for i in 0..rows {
            g[i * rows + i] += mu;
        }
        let alpha = solve_spd(&g, y, rows, CLASSES)?;
        let mut w = vec![0.0; hidden * CLASSES];
        matmul_tn(hidden, rows, CLASSES, h, &alpha, 0.0, &mut w);
        Ok(w)
    } else {
        let mut g = vec![0.0; hidden * hidden];
        matmul_tn(hidden, rows, hidden, h, h, 0.0, &mut g);
        for i in 0..hidden {
            g[i * hidden + i] += mu;
        }
        let mut rhs = vec![0.0; hidden * CLASSES];
        matmul_tn(hidden, rows, CLASSES, h, y, 0.0, &mut rhs);
        solve_spd(&g, &rhs, hidden, CLASSES)
    }
}

pub fn fit(x: &[f64], labels: &[u8], width: usize, hidden: usize, mu: f64, seed: u64) -> Result<ElmModel> {
    if hidden == 0 {
        return Err(Error::domain("ELM needs hidden >= 1"));
    }
    let mut m = ElmModel::projection(width, hidden, seed);
    let h = m.hidden_activations(x)?;
    m.readout = ridge_readout(&h, labels.len(), hidden, &one_hot(labels), mu)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::argmax_rows;
    use crate::rng::rng_from_seed;

    /// Gaussian elimination with partial pivoting on an augmented system.
    fn lu_solve(mut a: Vec<Vec<f64>>, mut b: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
        let n = a.len();
        for col in 0..n {
            let p = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, p);
            b.swap(col, p);
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                for c in 0..b[r].len() {
                    b[r][c] -= f * b[col][c];
                }
            }
        }
        let m = b[0].len();
        let mut x = vec![vec![0.0; m]; n];
        for r in (0..n).rev() {
            for c in 0..m {
                let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k][c]).sum();
                x[r][c] = (b[r][c] - s) / a[r][r];
            }
        }
        x
    }

    fn random_data(rows: usize, width: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
        let mut rng = rng_from_seed(seed);
        let x = (0..rows * width).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = (0..rows).map(|i| (i % CLASSES) as u8).collect();
        (x, y)
    }

    #[test]
    fn readout_matches_lu_normal_equations() {
        let (rows, hidden, width) = (100, 50, 12);
        let (x, y) = random_data(rows, width, 3);
        let m = fit(&x, &y, width, hidden, 1e-6, 9).unwrap();
        let h = m.hidden_activations(&x).unwrap();
        let t = one_hot(&y);
        let mut a = vec![vec![0.0; hidden]; hidden];
        let mut b = vec![vec![0.0; CLASSES]; hidden];
        for r in 0..rows {
            for i in 0..hidden {
                for j in 0..hidden {
                    a[i][j] += h[r * hidden + i] * h[r * hidden + j];
                }
                for c in 0..CLASSES {
                    b[i][c] += h[r * hidden + i] * t[r * CLASSES + c];
                }
            }
        }
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += 1e-6;
        }
        let want = lu_solve(a, b);
        for i in 0..hidden {
            for c in 0..CLASSES {
                let got = m.readout[i * CLASSES + c];
                assert!((got - want[i][c]).abs() <= 1e-6 * want[i][c].abs().max(1.0), "{got} vs {}", want[i][c]);
            }
        }
    }

    #[test]
    fn dual_form_agrees_with_primal() {
        let (rows, hidden) = (20, 30);
        let mut rng = rng_from_seed(4);
        let h: Vec<f64> = (0..rows * hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = one_hot(&(0..rows).map(|i| (i % 8) as u8).collect::<Vec<_>>());
        let dual = ridge_readout(&h, rows, hidden, &y, 1e-3).unwrap();
        let mut g = vec![0.0; hidden * hidden];
        matmul_tn(hidden, rows, hidden, &h, &h, 0.0, &mut g);
        for i in 0..hidden {
            g[i * hidden + i] += 1e-3;
        }
        let mut rhs = vec![0.0; hidden * CLASSES];
        matmul_tn(hidden, rows, CLASSES, &h, &y, 0.0, &mut rhs);
        let primal = solve_spd(&g, &rhs, hidden, CLASSES).unwrap();
        for (a, b) in dual.iter().zip(&primal) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn overparameterized_fit_is_exact() {
        let (x, y) = random_data(8, 16, 1);
        let m = fit(&x, &y, 16, 8000, 1e-6, 2).unwrap();
        assert_eq!(argmax_rows(&m.scores(&x).unwrap(), CLASSES), y);
    }

    #[test]
    fn single_unit_cannot_fit_xor() {
        let x = vec![0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let y = vec![0, 1, 1, 0];
        let m = fit(&x, &y, 2, 1, 1e-6, 3).unwrap();
        let pred = argmax_rows(&m.scores(&x).unwrap(), CLASSES);
        assert_ne!(pred, y);
    }

    #[test]
    fn readout_is_locally_optimal() {
        let (x, y) = random_data(60, 10, 7);
        let m = fit(&x, &y, 10, 20, 1e-6, 1).unwrap();
        let h = m.hidden_activations(&x).unwrap();
        let t = one_hot(&y);
        let resid = |w: &[f64]| {
            let mut p = vec![0.0; 60 * CLASSES];
            matmul(60, 20, CLASSES, &h, w, 0.0, &mut p);
            p.iter().zip(&t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        let base = resid(&m.readout);
        let mut rng = rng_from_seed(2);
        for _ in 0..100 {
            let w: Vec<f64> = m.readout.iter().map(|v| v + rng.random_range(-1e-3..1e-3)).collect();
            assert!(resid(&w) >= base - 1e-9);
        }
    }
}
