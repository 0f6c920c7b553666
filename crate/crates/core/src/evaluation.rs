//! Confusion matrices, accuracy and the training benchmark harness.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classifiers::{self, ModelSpec, Samples, TrainedModel, CLASSES};
use crate::error::{Error, Result};
use crate::waveforms::TransientClass;

/// Rows are true classes, columns predictions, both in class-code order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASSES]; CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sums(&self) -> [u64; CLASSES] {
        self.counts.map(|r| r.iter().sum())
    }

    /// 8×8 CSV with a header row of class names.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let names: Vec<&str> = TransientClass::ALL.iter().map(|c| c.name()).collect();
        s.push_str(&names.join(","));
        s.push('\n');
        for row in &self.counts {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let Some((_, header)) = lines.next() else {
            return Err(Error::Parse { line: 1, msg: "empty confusion matrix file".into() });
        };
        if header.split(',').count() != CLASSES {
            return Err(Error::Parse { line: 1, msg: format!("header must name {CLASSES} classes") });
        }
        let mut cm = ConfusionMatrix::default();
        let mut rows = 0;
        for (ln, line) in lines {
            if rows == CLASSES {
                return Err(Error::Parse { line: ln + 1, msg: "more than 8 data rows".into() });
            }
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != CLASSES {
                return Err(Error::Parse { line: ln + 1, msg: format!("expected {CLASSES} columns") });
            }
            for (j, c) in cells.iter().enumerate() {
                cm.counts[rows][j] = c.trim().parse().map_err(|e| Error::Parse {
                    line: ln + 1,
                    msg: format!("column {}: {e}", j + 1),
                })?;
            }
            rows += 1;
        }
        if rows != CLASSES {
            return Err(Error::Parse { line: rows + 2, msg: format!("expected {CLASSES} data rows, found {rows}") });
        }
        Ok(cm)
    }
}

pub fn confusion_matrix(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::domain(format!(
            "label length {} differs from prediction length {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t as usize >= CLASSES || p as usize >= CLASSES {
            return Err(Error::domain(format!("class code out of range: true {t}, predicted {p}")));
        }
        cm.counts[t as usize][p as usize] += 1;
    }
    Ok(cm)
}

/// `100 · trace / total`.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::domain("accuracy of an empty confusion matrix"));
    }
    Ok(100.0 * cm.trace() as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    /// Percent correct on the most recent evaluation set. Training set
    /// accuracy straight out of a trainer; test accuracy after a benchmark.
    pub accuracy_percent: f64,
    pub train_seconds: f64,
    pub epochs: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_trace: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl TrainReport {
    pub fn new(model: &str, accuracy_percent: f64, train_seconds: f64, epochs: usize, loss_trace: Vec<f64>) -> Self {
        Self { model: model.to_string(), accuracy_percent, train_seconds, epochs, loss_trace, error: None }
    }

    fn failed(model: &str, err: &Error) -> Self {
        Self {
            model: model.to_string(),
            accuracy_percent: 0.0,
            train_seconds: 0.0,
            epochs: 0,
            loss_trace: Vec::new(),
            error: Some(err.to_string()),
        }
    }
}

/// Predicts `test` and returns its confusion matrix.
pub fn evaluate(model: &TrainedModel, test: &Samples) -> Result<ConfusionMatrix> {
    use rayon::prelude::*;
    let w = test.width;
    let chunk = 512 * w;
    let preds: Vec<Vec<u8>> = test.x.par_chunks(chunk).map(|c| model.predict(c)).collect::<Result<_>>()?;
    confusion_matrix(&test.labels, &preds.concat())
}

#[derive(Debug, Clone)]
pub struct BenchEntry {
    pub spec: ModelSpec,
    pub report: TrainReport,
    pub confusion: Option<ConfusionMatrix>,
}

/// Trains each spec in turn and scores it on `test`. A failing model is
/// recorded with its error and the remaining models still run.
pub fn benchmark_training(
    specs: &[ModelSpec],
    train: &Samples,
    test: &Samples,
    mut progress: impl FnMut(&BenchEntry),
) -> Result<Vec<BenchEntry>> {
    if specs.is_empty() {
        return Err(Error::domain("benchmark needs at least one model"));
    }
    let mut out = Vec::with_capacity(specs.len());
    for spec in specs {
        let name = spec.kind.display_name();
        let entry = match run_one(spec, train, test) {
            Ok((report, cm)) => BenchEntry { spec: *spec, report, confusion: Some(cm) },
            Err(e) => BenchEntry { spec: *spec, report: TrainReport::failed(name, &e), confusion: None },
        };
        progress(&entry);
        out.push(entry);
    }
    Ok(out)
}

fn run_one(spec: &ModelSpec, train: &Samples, test: &Samples) -> Result<(TrainReport, ConfusionMatrix)> {
    let (model, mut report) = classifiers::train(spec, train)?;
    let cm = evaluate(&model, test)?;
    report.accuracy_percent = accuracy(&cm)?;
    Ok((report, cm))
}

/// Aligned text table sorted by accuracy, best first.
pub fn render_table(reports: &[TrainReport]) -> String {
    let mut rows: Vec<&TrainReport> = reports.iter().collect();
    rows.sort_by(|a, b| b.accuracy_percent.total_cmp(&a.accuracy_percent));
    let width = rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>12}  {:>14}  {:>6}", "Model", "Accuracy (%)", "Train time (s)", "Epochs");
    let _ = writeln!(s, "{}", "-".repeat(width + 2 + 12 + 2 + 14 + 2 + 6));
    for r in rows {
        match &r.error {
            None => {
                let _ = writeln!(
                    s,
                    "{:<width$}  {:>12.3}  {:>14.2}  {:>6}",
                    r.model, r.accuracy_percent, r.train_seconds, r.epochs
                );
            }
            Some(e) => {
                let _ = writeln!(s, "{:<width$}  failed: {e}", r.model);
            }
        }
    }
    s
}

/// Structured summary: array of `{model, accuracy_percent, train_seconds, epochs}`.
pub fn reports_json(reports: &[TrainReport]) -> Result<String> {
    let rows: Vec<serde_json::Value> = reports
        .iter()
        .map(|r| {
            let mut v = serde_json::json!({
                "model": r.model,
                "accuracy_percent": r.accuracy_percent,
                "train_seconds": r.train_seconds,
                "epochs": r.epochs,
            });
            if let Some(e) = &r.error {
                v["error"] = serde_json::Value::String(e.clone());
            }
            v
        })
        .collect();
    serde_json::to_string_pretty(&rows).map_err(|e| Error::domain(format!("report encoding: {e}")))
}

pub fn write_reports_json(reports: &[TrainReport], path: &Path) -> Result<()> {
    std::fs::write(path, reports_json(reports)? + "\n")?;
    Ok(())
}

pub fn write_confusion_csv(cm: &ConfusionMatrix, path: &Path) -> Result<()> {
    std::fs::write(path, cm.to_csv())?;
    Ok(())
}

pub fn read_confusion_csv(path: &Path) -> Result<ConfusionMatrix> {
    ConfusionMatrix::from_csv(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn identity_predictions_are_diagonal() {
        let y: Vec<u8> = (0..40).map(|i| (i * 7 % 8) as u8).collect();
        let cm = confusion_matrix(&y, &y).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(cm.counts[i][j] > 0, i == j);
            }
        }
        assert_eq!(accuracy(&cm).unwrap(), 100.0);
    }

    #[test]
    fn unit_case() {
        let cm = confusion_matrix(&[3], &[5]).unwrap();
        assert_eq!(cm.counts[3][5], 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn matches_double_loop() {
        let mut rng = rng_from_seed(1);
        let t: Vec<u8> = (0..1000).map(|_| rng.random_range(0..8)).collect();
        let p: Vec<u8> = (0..1000).map(|_| rng.random_range(0..8)).collect();
        let cm = confusion_matrix(&t, &p).unwrap();
        for i in 0..8u8 {
            for j in 0..8u8 {
                let n = t.iter().zip(&p).filter(|&(&a, &b)| a == i && b == j).count() as u64;
                assert_eq!(cm.counts[i as usize][j as usize], n);
            }
        }
        let direct = 100.0 * t.iter().zip(&p).filter(|(a, b)| a == b).count() as f64 / 1000.0;
        assert!((accuracy(&cm).unwrap() - direct).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        assert!(confusion_matrix(&[1, 2], &[1]).is_err());
        assert!(confusion_matrix(&[8], &[1]).is_err());
        assert!(accuracy(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn trace_nine_of_twelve() {
        let mut cm = ConfusionMatrix::default();
        cm.counts[0][0] = 4;
        cm.counts[1][1] = 5;
        cm.counts[2][0] = 3;
        assert_eq!(accuracy(&cm).unwrap(), 75.0);
    }

    #[test]
    fn csv_round_trip() {
        let mut cm = ConfusionMatrix::default();
        cm.counts[2][7] = 11;
        cm.counts[5][5] = 3;
        let text = cm.to_csv();
        assert_eq!(text.lines().count(), 9);
        assert_eq!(ConfusionMatrix::from_csv(&text).unwrap(), cm);
        assert!(ConfusionMatrix::from_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn table_sorted_by_accuracy() {
        let r = vec![TrainReport::new("A", 50.0, 1.0, 2, vec![]), TrainReport::new("B", 90.0, 3.0, 1, vec![])];
        let t = render_table(&r);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[2].starts_with('B') && lines[3].starts_with('A'));
        let v: serde_json::Value = serde_json::from_str(&reports_json(&r).unwrap()).unwrap();
        assert_eq!(v[1]["accuracy_percent"], 90.0);
    }
}
