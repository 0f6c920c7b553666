//! End-to-end acceptance run. Each criterion prints one PASS/FAIL line; the
//! process exits nonzero if any criterion fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use gwt_core::classifiers::persist::{decode_model, encode_model, read_model, write_model};
use gwt_core::classifiers::{topology, train, ModelKind, ModelSpec, Samples};
use gwt_core::dataset::{
    build_dataset, encode_dataset, holdout_split, read_dataset, write_dataset, DatasetConfig, Generator,
};
use gwt_core::features::{haar_dwt, haar_idwt, pca_fit, tv_denoise};
use gwt_core::nn::gradcheck::{check_function, check_network};
use gwt_core::nn::loss::softmax_cross_entropy;
use gwt_core::nn::{LayerSpec, Network, Shape};
use gwt_core::noise::{matched_filter_snr, NoiseModel};
use gwt_core::rng::rng_from_seed;
use gwt_core::waveforms::{sample_params, synthesize, TimeGrid, TransientClass, WaveformParams};
use rand::Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
}

fn gwt(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_gwt")).args(args).output().map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("gwt {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)),
    )
}

fn json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

// --- 1 -------------------------------------------------------------------

/// Templates evaluated straight from their closed forms; the chirping
/// template uses the expanded real part e^{-u}·cos(α·u + 2πf₀Δt), u = Δt²/4τ².
fn direct(p: &WaveformParams, grid: &TimeGrid) -> Vec<f64> {
    (0..grid.n_samples)
        .map(|i| {
            let dt = i as f64 / grid.sample_rate - grid.t0;
            match *p {
                WaveformParams::Gaussian { tau } => (-dt * dt / (tau * tau)).exp(),
                WaveformParams::SineGaussian { f0, tau } => (-dt * dt / (tau * tau)).exp() * (2.0 * PI * f0 * dt).sin(),
                WaveformParams::Ringdown { f0, tau } => {
                    if dt >= 0.0 {
                        (-dt / tau).exp() * (2.0 * PI * f0 * dt).cos()
                    } else {
                        0.0
                    }
                }
                WaveformParams::ChirpingSineGaussian { f0, alpha, tau } => {
                    let u = dt * dt / (4.0 * tau * tau);
                    (-u).exp() * (alpha * u + 2.0 * PI * f0 * dt).cos() / (2.0 * PI * tau * tau).powf(0.25)
                }
                _ => f64::NAN,
            }
        })
        .collect()
}

fn waveform_oracle() -> Check {
    let start = Instant::now();
    let grid = TimeGrid::default();
    let mut rng = rng_from_seed(1);
    let mut worst = 0.0f64;
    for class in [
        TransientClass::Gaussian,
        TransientClass::SineGaussian,
        TransientClass::Ringdown,
        TransientClass::ChirpingSineGaussian,
    ] {
        for _ in 0..100 {
            let p = sample_params(class, &mut rng);
            let got = synthesize(class, &p, &grid).map_err(|e| e.to_string())?.samples;
            for (a, b) in got.iter().zip(direct(&p, &grid)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("400 draws, max deviation {worst:.1e}"))
}

// --- 2 -------------------------------------------------------------------

fn snr_round_trip() -> Check {
    let start = Instant::now();
    let g = Generator::new(DatasetConfig { master_seed: 42, ..DatasetConfig::default() }).map_err(|e| e.to_string())?;
    let noise = NoiseModel::white(1.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut rng = rng_from_seed(2);
    for i in 0..1000 {
        let class = TransientClass::ALL[rng.random_range(0..8)];
        let inj = g.inject(class, i).map_err(|e| e.to_string())?;
        ensure((5.0..=25.0).contains(&inj.target_snr), format!("target {} out of range", inj.target_snr))?;
        worst = worst.max((matched_filter_snr(&inj.signal, &noise) / inj.target_snr - 1.0).abs());
    }
    ensure(worst < 1e-9, format!("max relative error {worst:e}"))?;
    within(start.elapsed(), 30.0)?;
    Ok(format!("1000 injections, max relative error {worst:.1e}"))
}

// --- 3 -------------------------------------------------------------------

fn invertibility() -> Check {
    let start = Instant::now();
    let mut rng = rng_from_seed(3);
    let x: Vec<f64> = (0..1024).map(|_| rng.random_range(-5.0..5.0)).collect();
    let back = haar_idwt(&haar_dwt(&x, 5).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let haar = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(haar <= 1e-12, format!("haar error {haar:e}"))?;

    let (rows, cols) = (200, 64);
    let m: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    let pca = pca_fit(&m, rows, cols, cols).map_err(|e| e.to_string())?;
    let mut pca_err = 0.0f64;
    for r in m.chunks(cols) {
        let rec = pca.reconstruct(&pca.project(r).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        pca_err = r.iter().zip(&rec).map(|(a, b)| (a - b).abs()).fold(pca_err, f64::max);
    }
    ensure(pca_err <= 1e-9, format!("pca error {pca_err:e}"))?;

    let tv = tv_denoise(&x, 0.0).map_err(|e| e.to_string())?;
    ensure(tv == x, "tv with zero weight changed its input")?;
    within(start.elapsed(), 10.0)?;
    Ok(format!("haar {haar:.1e}, pca {pca_err:.1e}, tv exact"))
}

// --- 4 -------------------------------------------------------------------

fn random_input(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.random_range(-2.0..2.0)).collect()
}

fn checked_net(input: Shape, layers: Vec<LayerSpec>, seed: u64) -> Result<Network, String> {
    let mut n = Network::with_input_shape(input, layers).map_err(|e| e.to_string())?;
    let mut rng = rng_from_seed(seed);
    n.init_params(&mut rng);
    // Nonzero biases so every parameter influences the loss.
    let layers = n.layers().to_vec();
    for (p, l) in n.params_mut().iter_mut().zip(&layers) {
        let from = match *l {
            LayerSpec::Dense { input, output } => input * output,
            LayerSpec::Conv1D { in_channels, out_channels, kernel, .. } => out_channels * in_channels * kernel,
            _ => continue,
        };
        for b in &mut p[from..] {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    Ok(n)
}

fn gradients() -> Check {
    let start = Instant::now();
    let labels: Vec<u8> = vec![0, 3, 6, 1];
    let mut cases: Vec<(String, Network, Option<usize>)> = vec![
        ("dense".into(), checked_net(Shape::flat(9), vec![LayerSpec::dense(9, 8)], 1)?, None),
        (
            "conv1d".into(),
            checked_net(
                Shape { channels: 2, length: 19 },
                vec![
                    LayerSpec::Conv1D { in_channels: 2, out_channels: 3, kernel: 3, stride: 2, dilation: 2 },
                    LayerSpec::Flatten,
                    LayerSpec::dense(24, 8),
                ],
                2,
            )?,
            None,
        ),
        (
            "maxpool".into(),
            checked_net(
                Shape::flat(20),
                vec![LayerSpec::conv(1, 2, 3), LayerSpec::MaxPool1D { width: 3 }, LayerSpec::Flatten, LayerSpec::dense(12, 8)],
                3,
            )?,
            None,
        ),
        (
            "bilstm".into(),
            checked_net(
                Shape::flat(15),
                vec![LayerSpec::BiLstm { input_size: 3, hidden_size: 4 }, LayerSpec::dense(8, 8)],
                4,
            )?,
            None,
        ),
    ];
    for (name, layers) in topology::all(1024).map_err(|e| e.to_string())? {
        cases.push((name.to_string(), checked_net(Shape::flat(1024), layers, 5)?, Some(24)));
    }
    let mut worst = 0.0f64;
    for (k, (name, net, per_tensor)) in cases.iter().enumerate() {
        let x = random_input(4 * net.input_width(), 10 + k as u64);
        let r = check_network(net, &x, &labels, 1e-5, *per_tensor, &mut rng_from_seed(20 + k as u64))
            .map_err(|e| format!("{name}: {e}"))?;
        ensure(r.max_rel_error < 1e-4, format!("{name}: relative error {:e}", r.max_rel_error))?;
        worst = worst.max(r.max_rel_error);
    }
    let logits = random_input(32, 30);
    let (_, g) = softmax_cross_entropy(&logits, &labels, 8).map_err(|e| e.to_string())?;
    let ce = check_function(|l| softmax_cross_entropy(l, &labels, 8).unwrap().0, &logits, &g, 1e-5);
    ensure(ce < 1e-4, format!("softmax-ce: relative error {ce:e}"))?;
    within(start.elapsed(), 120.0)?;
    Ok(format!("{} networks + softmax-ce, max relative error {:.1e}", cases.len(), worst.max(ce)))
}

// --- 5 and 6 -------------------------------------------------------------

struct Bench {
    rows: Vec<(String, f64, f64)>,
    elapsed: Duration,
}

impl Bench {
    fn get(&self, display: &str) -> Result<(f64, f64), String> {
        self.rows
            .iter()
            .find(|r| r.0 == display)
            .map(|r| (r.1, r.2))
            .ok_or_else(|| format!("{display} missing from bench report"))
    }
}

fn run_bench(dir: &Path) -> Result<Bench, String> {
    let out = dir.join("bench");
    let start = Instant::now();
    gwt(&["bench", "--per-class", "800", "--seed", "42", "--fast", "--out-dir", s(&out)])?;
    let elapsed = start.elapsed();
    let v = json(&out.join("report.json"))?;
    let rows = v
        .as_array()
        .ok_or("report is not an array")?
        .iter()
        .map(|r| {
            (
                r["model"].as_str().unwrap_or_default().to_string(),
                r["accuracy_percent"].as_f64().unwrap_or(f64::NAN),
                r["train_seconds"].as_f64().unwrap_or(f64::NAN),
            )
        })
        .collect();
    Ok(Bench { rows, elapsed })
}

fn desk_scale(b: &Bench) -> Check {
    let acc = |m: &str| b.get(m).map(|r| r.0);
    let (cnn, df, rnn) = (acc("CNN")?, acc("Deep Filtering")?, acc("RNN (BiLSTM)")?);
    let (rf, mlp, elm) = (acc("Random Forest")?, acc("MLP")?, acc("ELM")?);
    let summary =
        b.rows.iter().map(|(m, a, _)| format!("{m} {a:.2}")).collect::<Vec<_>>().join(", ");
    let mut failures = Vec::new();
    for (name, a, min) in [("CNN", cnn, 95.0), ("Deep Filtering", df, 95.0), ("RNN", rnn, 90.0), ("RF", rf, 85.0), ("MLP", mlp, 80.0)] {
        if !(a >= min) {
            failures.push(format!("{name} {a:.2} < {min}"));
        }
    }
    for (m, a, _) in &b.rows {
        if !(*a > 35.0) {
            failures.push(format!("{m} {a:.2} <= 35"));
        }
    }
    if !(cnn.min(df).min(rnn) >= rf && rf >= mlp) {
        failures.push("ordering {CNN, DF, RNN} >= RF >= MLP violated".into());
    }
    if b.rows.iter().all(|r| elm >= r.1) {
        failures.push("ELM is the top model".into());
    }
    let minutes = b.elapsed.as_secs_f64() / 60.0;
    if minutes > 45.0 {
        failures.push(format!("total {minutes:.1} min > 45"));
    }
    if failures.is_empty() {
        Ok(format!("{summary}; {minutes:.1} min"))
    } else {
        Err(format!("{} [{summary}; {minutes:.1} min]", failures.join("; ")))
    }
}

fn timing(b: &Bench) -> Check {
    let t = |m: &str| b.get(m).map(|r| r.1);
    let (lr, rf) = (t("Logistic Regression")?, t("Random Forest")?);
    ensure(lr < rf, format!("logreg {lr:.2} s >= random forest {rf:.2} s"))?;
    let mut fastest_deep = f64::INFINITY;
    for m in ["MLP", "Stacked Autoencoder", "CNN", "RNN (BiLSTM)", "Deep Filtering"] {
        let d = t(m)?;
        ensure(rf < d, format!("random forest {rf:.2} s >= {m} {d:.2} s"))?;
        fastest_deep = fastest_deep.min(d);
    }
    Ok(format!("logreg {lr:.2} s < rf {rf:.2} s < fastest deep {fastest_deep:.2} s"))
}

// --- 7 -------------------------------------------------------------------

fn determinism(dir: &Path) -> Check {
    let (a, b) = (dir.join("det_a.gwtd"), dir.join("det_b.gwtd"));
    for p in [&a, &b] {
        gwt(&["gen", "--per-class", "40", "--seed", "42", "--out", s(p)])?;
    }
    let bytes = std::fs::read(&a).map_err(|e| e.to_string())?;
    ensure(bytes == std::fs::read(&b).map_err(|e| e.to_string())?, "gen outputs differ")?;
    let mut accs = Vec::new();
    for model in ["mlp", "rf", "cnn"] {
        let mut pair = Vec::new();
        for run in 0..2 {
            let out = dir.join(format!("det_{model}_{run}.gwmd"));
            gwt(&["train", "--model", model, "--data", s(&a), "--epochs", "2", "--fast", "--out", s(&out)])?;
            pair.push(json(&out.with_extension("json"))?[0]["accuracy_percent"].as_f64().ok_or("no accuracy")?);
        }
        ensure(pair[0] == pair[1], format!("{model}: {} vs {}", pair[0], pair[1]))?;
        accs.push(format!("{model} {:.2}", pair[0]));
    }
    Ok(format!("{} identical dataset bytes; repeated train accuracies equal ({})", bytes.len(), accs.join(", ")))
}

// --- 8 -------------------------------------------------------------------

fn round_trips(dir: &Path) -> Check {
    let config = DatasetConfig { per_class: 30, master_seed: 42, ..DatasetConfig::default() };
    let ds = build_dataset(&config).map_err(|e| e.to_string())?;
    let path = dir.join("rt.gwtd");
    write_dataset(&ds, &path).map_err(|e| e.to_string())?;
    let back = read_dataset(&path).map_err(|e| e.to_string())?;
    ensure(back == ds, "dataset differs after re-read")?;
    ensure(encode_dataset(&back) == std::fs::read(&path).map_err(|e| e.to_string())?, "dataset bytes differ")?;

    let (tr, te) = holdout_split(&ds, 0.8, 42).map_err(|e| e.to_string())?;
    let (tr, te) = (Samples::from(&tr), Samples::from(&te));
    let mut names = Vec::new();
    for name in ["logreg", "elm", "rf", "cnn"] {
        let mut spec = ModelSpec::from_name(name, true).map_err(|e| e.to_string())?;
        spec.train.epochs = 1;
        if let ModelKind::Elm { hidden, .. } = &mut spec.kind {
            *hidden = 64;
        }
        let (model, _) = train(&spec, &tr).map_err(|e| e.to_string())?;
        let file = dir.join(format!("rt_{name}.gwmd"));
        write_model(&model, &file).map_err(|e| e.to_string())?;
        let again = read_model(&file).map_err(|e| e.to_string())?;
        ensure(again == model, format!("{name}: model differs after re-read"))?;
        let bytes = std::fs::read(&file).map_err(|e| e.to_string())?;
        ensure(encode_model(&again).map_err(|e| e.to_string())? == bytes, format!("{name}: bytes differ"))?;
        ensure(decode_model(&bytes).map_err(|e| e.to_string())? == model, format!("{name}: decode differs"))?;
        let (p, q) = (model.scores(&te.x).map_err(|e| e.to_string())?, again.scores(&te.x).map_err(|e| e.to_string())?);
        ensure(
            p.iter().zip(&q).all(|(a, b)| a.to_bits() == b.to_bits()),
            format!("{name}: scores differ after re-read"),
        )?;
        names.push(name);
    }

    let csv_data = dir.join("rt_csv.gwtd");
    gwt(&["gen", "--per-class", "5", "--seed", "42", "--out", s(&csv_data), "--csv"])?;
    let text = std::fs::read_to_string(csv_data.with_extension("csv")).map_err(|e| e.to_string())?;
    let labels: Vec<u8> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().and_then(|c| c.parse().ok()).ok_or_else(|| format!("bad row: {l}")))
        .collect::<Result<_, _>>()?;
    ensure(labels == read_dataset(&csv_data).map_err(|e| e.to_string())?.labels(), "csv labels differ")?;
    Ok(format!("dataset and {} models bit-exact; {} csv labels match", names.join("/"), labels.len()))
}

fn report(n: usize, title: &str, start: Instant, r: &Check) -> bool {
    let secs = start.elapsed().as_secs_f64();
    match r {
        Ok(d) => println!("criterion {n} {title}: PASS ({d}) [{secs:.1} s]"),
        Err(d) => println!("criterion {n} {title}: FAIL ({d}) [{secs:.1} s]"),
    }
    r.is_ok()
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut ok = true;
    let t = Instant::now();
    ok &= report(1, "waveform oracle", t, &waveform_oracle());
    let t = Instant::now();
    ok &= report(2, "snr round trip", t, &snr_round_trip());
    let t = Instant::now();
    ok &= report(3, "transform invertibility", t, &invertibility());
    let t = Instant::now();
    ok &= report(4, "gradient correctness", t, &gradients());
    let t = Instant::now();
    match run_bench(dir.path()) {
        Ok(b) => {
            ok &= report(5, "desk-scale accuracy", t, &desk_scale(&b));
            ok &= report(6, "timing order", t, &timing(&b));
        }
        Err(e) => {
            ok &= report(5, "desk-scale accuracy", t, &Err(e.clone()));
            ok &= report(6, "timing order", t, &Err(e));
        }
    }
    let t = Instant::now();
    ok &= report(7, "determinism", t, &determinism(dir.path()));
    let t = Instant::now();
    ok &= report(8, "format round trips", t, &round_trips(dir.path()));
    if !ok {
        std::process::exit(1);
    }
}
