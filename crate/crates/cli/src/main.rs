//! `gwt`: generate transient datasets, train and evaluate classifiers,
//! render plots and run the full model benchmark.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gwt_core::classifiers::persist::{read_model, write_model};
use gwt_core::classifiers::{self, ModelKind, ModelSpec, Samples, MODEL_NAMES};
use gwt_core::dataset::{self, build_dataset, holdout_split, read_dataset, write_dataset, DatasetConfig};
use gwt_core::evaluation::{
    self, accuracy, benchmark_training, evaluate, read_confusion_csv, render_table, write_confusion_csv,
    write_reports_json, TrainReport,
};
use gwt_core::features::FeatureKind;
use gwt_core::waveforms::{TimeGrid, TransientClass};
use gwt_core::Error;

#[derive(Parser)]
#[command(name = "gwt", version, about = "Synthetic transient classification workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled dataset file.
    Gen(GenArgs),
    /// Train one model on a hold-out split of a dataset.
    Train(TrainArgs),
    /// Score a saved model on a dataset.
    Eval(EvalArgs),
    /// Render a signal or a confusion matrix as SVG.
    Plot(PlotArgs),
    /// Generate, train every model and write the comparison tables.
    Bench(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 800)]
    per_class: usize,
    #[arg(long, default_value_t = 5.0)]
    snr_min: f64,
    #[arg(long, default_value_t = 25.0)]
    snr_max: f64,
    #[arg(long, default_value_t = 1024)]
    samples: usize,
    #[arg(long, default_value_t = 4096.0)]
    rate: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Supernova waveform catalog; the built-in surrogate family is used otherwise.
    #[arg(long)]
    sn_catalog: Option<PathBuf>,
    /// Also write `<out>.csv`.
    #[arg(long)]
    csv: bool,
}

#[derive(Args, Clone)]
struct TrainingFlags {
    /// Override the per-model default epoch count.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    /// Learning rate (default 1e-5, or 1e-3 with --fast).
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value_t = 1e-5)]
    decay: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value = "none")]
    features: FeatureKind,
    /// Desk-scale settings: lr 1e-3 and a 2000-unit ELM.
    #[arg(long)]
    fast: bool,
    #[arg(long, default_value_t = 0.8)]
    split: f64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Report path (default: `<out>.json`).
    #[arg(long)]
    report: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainingFlags,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    confusion: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long, conflicts_with = "confusion", requires = "index")]
    data: Option<PathBuf>,
    #[arg(long)]
    index: Option<usize>,
    #[arg(long, required_unless_present = "data")]
    confusion: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 800)]
    per_class: usize,
    /// Use an existing dataset instead of generating one.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Comma-separated subset of models (default: all nine).
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    /// ELM hidden width override.
    #[arg(long)]
    elm_hidden: Option<usize>,
    #[arg(long, default_value = "bench_out")]
    out_dir: PathBuf,
    #[command(flatten)]
    flags: TrainingFlags,
}

enum Failure {
    Usage(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    configure_threads();
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Plot(a) => cmd_plot(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Numerical(_) => 3,
                _ => 2,
            })
        }
    }
}

/// Caps the worker pool at `GWT_THREADS` when set.
fn configure_threads() {
    if let Some(n) = std::env::var("GWT_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn cmd_gen(a: GenArgs) -> CliResult<()> {
    let grid = TimeGrid::centered(a.samples, a.rate).map_err(|e| usage(e.to_string()))?;
    let config = DatasetConfig {
        per_class: a.per_class,
        snr_min: a.snr_min,
        snr_max: a.snr_max,
        grid,
        master_seed: a.seed,
        supernova_catalog: a.sn_catalog,
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let ds = build_dataset(&config)?;
    write_dataset(&ds, &a.out)?;
    if a.csv {
        dataset::export_csv(&ds, &a.out.with_extension("csv"))?;
    }
    eprintln!("wrote {} examples to {}", ds.len(), a.out.display());
    Ok(())
}

fn build_spec(name: &str, f: &TrainingFlags) -> CliResult<ModelSpec> {
    let mut spec = ModelSpec::from_name(name, f.fast).map_err(|e| usage(e.to_string()))?;
    if let Some(e) = f.epochs {
        spec.train.epochs = e;
    }
    if let Some(lr) = f.lr {
        spec.train.lr = lr;
    }
    spec.train.batch = f.batch;
    spec.train.decay = f.decay;
    spec.train.seed = f.seed;
    spec.features = f.features;
    spec.validate().map_err(|e| usage(e.to_string()))?;
    Ok(spec)
}

fn split(data: &Path, f: &TrainingFlags) -> CliResult<(Samples, Samples)> {
    if !(f.split > 0.0 && f.split < 1.0) {
        return Err(usage(format!("--split must lie in (0, 1), got {}", f.split)));
    }
    let ds = read_dataset(data)?;
    let (train, test) = holdout_split(&ds, f.split, f.seed)?;
    Ok((Samples::from(&train), Samples::from(&test)))
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let spec = build_spec(&a.model, &a.flags)?;
    let (train, test) = split(&a.data, &a.flags)?;
    let (model, mut report) = classifiers::train(&spec, &train)?;
    let train_acc = report.accuracy_percent;
    report.accuracy_percent = accuracy(&evaluate(&model, &test)?)?;
    write_model(&model, &a.out)?;
    let report_path = a.report.unwrap_or_else(|| a.out.with_extension("json"));
    write_reports_json(std::slice::from_ref(&report), &report_path)?;
    eprintln!(
        "{}: train accuracy {train_acc:.3}%, test accuracy {:.3}% ({} test examples), {:.2} s",
        report.model,
        report.accuracy_percent,
        test.len(),
        report.train_seconds
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let model = read_model(&a.model)?;
    let ds = read_dataset(&a.data)?;
    if ds.n_features() != model.input_width() {
        return Err(Failure::Core(Error::Domain(format!(
            "model {} expects {} features per example but {} holds {}-sample examples",
            a.model.display(),
            model.input_width(),
            a.data.display(),
            ds.n_features()
        ))));
    }
    let samples = Samples::from(&ds);
    let cm = evaluate(&model, &samples)?;
    let report = TrainReport::new(model.spec.kind.display_name(), accuracy(&cm)?, 0.0, model.spec.train.epochs, vec![]);
    write_reports_json(std::slice::from_ref(&report), &a.report)?;
    write_confusion_csv(&cm, &a.confusion)?;
    println!("{}", render_table(std::slice::from_ref(&report)));
    Ok(())
}

fn class_names() -> Vec<&'static str> {
    TransientClass::ALL.iter().map(|c| c.name()).collect()
}

fn cmd_plot(a: PlotArgs) -> CliResult<()> {
    let svg = match (a.data, a.confusion) {
        (Some(data), _) => {
            let ds = read_dataset(&data)?;
            let k = a.index.ok_or_else(|| usage("--data needs --index"))?;
            let ex = ds
                .examples
                .get(k)
                .ok_or_else(|| usage(format!("--index {k} out of range: dataset holds {} examples", ds.len())))?;
            let x: Vec<f64> = ex.x.iter().map(|&v| v as f64).collect();
            let title = format!("#{k} {} (SNR {:.2})", ex.label.name(), ex.target_snr);
            plot::signal_svg(&x, ds.grid.sample_rate, &title)
        }
        (None, Some(cm)) => plot::confusion_svg(&read_confusion_csv(&cm)?, &class_names()),
        (None, None) => return Err(usage("plot needs --data/--index or --confusion")),
    };
    std::fs::write(&a.out, svg)?;
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> CliResult<()> {
    let names: Vec<String> =
        if a.models.is_empty() { MODEL_NAMES.iter().map(|s| s.to_string()).collect() } else { a.models.clone() };
    let mut specs = Vec::with_capacity(names.len());
    for n in &names {
        let mut spec = build_spec(n, &a.flags)?;
        if let (ModelKind::Elm { hidden, .. }, Some(h)) = (&mut spec.kind, a.elm_hidden) {
            *hidden = h;
        }
        spec.validate().map_err(|e| usage(e.to_string()))?;
        specs.push(spec);
    }
    let ds = match &a.data {
        Some(p) => read_dataset(p)?,
        None => {
            let config = DatasetConfig { per_class: a.per_class, master_seed: a.flags.seed, ..DatasetConfig::default() };
            config.validate().map_err(|e| usage(e.to_string()))?;
            eprintln!("generating {} examples per class", a.per_class);
            build_dataset(&config)?
        }
    };
    if !(a.flags.split > 0.0 && a.flags.split < 1.0) {
        return Err(usage(format!("--split must lie in (0, 1), got {}", a.flags.split)));
    }
    let (train, test) = holdout_split(&ds, a.flags.split, a.flags.seed)?;
    let (train, test) = (Samples::from(&train), Samples::from(&test));
    std::fs::create_dir_all(&a.out_dir)?;
    let entries = benchmark_training(&specs, &train, &test, |e| {
        let r = &e.report;
        match &r.error {
            None => eprintln!("{:<20} {:>8.3}% {:>9.2} s", r.model, r.accuracy_percent, r.train_seconds),
            Some(err) => eprintln!("{:<20} failed: {err}", r.model),
        }
    })?;
    let reports: Vec<TrainReport> = entries.iter().map(|e| e.report.clone()).collect();
    write_reports_json(&reports, &a.out_dir.join("report.json"))?;
    let table = render_table(&reports);
    std::fs::write(a.out_dir.join("table.txt"), &table)?;
    for e in &entries {
        if let Some(cm) = &e.confusion {
            let path = a.out_dir.join(format!("confusion_{}.csv", e.spec.kind.name()));
            evaluation::write_confusion_csv(cm, &path)?;
        }
    }
    println!("{table}");
    Ok(())
}
