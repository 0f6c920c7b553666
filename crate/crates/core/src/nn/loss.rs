//! Training objectives. Each returns the batch-mean loss and the gradient
//! with respect to the scores.

use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[u8], classes: usize) -> Result<()> {
    if classes == 0 || scores.len() != labels.len() * classes {
        return Err(Error::domain(format!(
            "{} scores do not hold {} rows of {classes} classes",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(&l) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::domain(format!("label {l} out of range for {classes} classes")));
    }
    Ok(())
}

/// Mean multinomial cross-entropy with log-sum-exp stabilization;
/// gradient `(softmax − onehot) / batch`.
pub fn softmax_cross_entropy(logits: &[f64], labels: &[u8], classes: usize) -> Result<(f64, Vec<f64>)> {
    check(logits, labels, classes)?;
    let batch = labels.len() as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for ((row, g), &y) in logits.chunks_exact(classes).zip(grad.chunks_exact_mut(classes)).zip(labels) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let lse = max + sum.ln();
        loss += lse - row[y as usize];
        for (gj, &v) in g.iter_mut().zip(row) {
            *gj = (v - lse).exp() / batch;
        }
        g[y as usize] -= 1.0 / batch;
    }
    Ok((loss / batch, grad))
}

/// One-vs-rest hinge loss: `mean_b Σ_c max(0, 1 − y_bc s_bc)` with
/// `y_bc = +1` for the true class and `−1` otherwise. Subgradient 0 at the hinge.
pub fn ovr_hinge(scores: &[f64], labels: &[u8], classes: usize) -> Result<(f64, Vec<f64>)> {
    check(scores, labels, classes)?;
    let batch = labels.len() as f64;
    let mut grad = vec![0.0; scores.len()];
    let mut loss = 0.0;
    for ((row, g), &y) in scores.chunks_exact(classes).zip(grad.chunks_exact_mut(classes)).zip(labels) {
        for (c, (&s, gc)) in row.iter().zip(g.iter_mut()).enumerate() {
            let t = if c == y as usize { 1.0 } else { -1.0 };
            let margin = 1.0 - t * s;
            if margin > 0.0 {
                loss += margin;
                *gc = -t / batch;
            }
        }
    }
    Ok((loss / batch, grad))
}

/// Mean squared error over all elements: `mean((pred − target)²)`.
pub fn mse(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::domain("mse: length mismatch or empty input"));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}
