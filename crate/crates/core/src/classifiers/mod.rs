//! The nine classifiers behind one train / predict interface.
//!
//! Network-backed models (logistic regression, one-vs-rest linear SVM, MLP,
//! stacked autoencoder, CNN, BiLSTM, dilated CNN) share a mini-batch ADAM
//! loop. The ELM and random forest have closed-form / greedy trainers.

pub mod autoencoder;
pub mod elm;
pub mod forest;
pub mod persist;
pub mod topology;

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::evaluation::TrainReport;
use crate::features::{FeatureKind, FeaturePipeline};
use crate::nn::loss::{ovr_hinge, softmax_cross_entropy};
use crate::nn::{argmax_rows, AdamState, LayerSpec, Network};
use crate::rng::rng_from;

pub use elm::ElmModel;
pub use forest::Forest;
pub use topology::CLASSES;

const TAG_INIT: u64 = 0x696e_6974;
const TAG_SHUFFLE: u64 = 0x7368_7566;
const TAG_PRETRAIN: u64 = 0x7072_6574;
const TAG_DROPOUT: u64 = 0x6472_6f70;

/// Rows scored per forward pass at prediction time.
const PREDICT_CHUNK: usize = 256;

/// Accepted `--model` names, in benchmark order.
pub const MODEL_NAMES: [&str; 9] = ["logreg", "svm", "elm", "rf", "mlp", "sae", "cnn", "rnn", "deepfilter"];

pub const ELM_HIDDEN_FULL: usize = 8000;
pub const ELM_HIDDEN_DESK: usize = 2000;
pub const ELM_RIDGE: f64 = 1e-6;
pub const SAE_PRETRAIN_EPOCHS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ElmActivation {
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum ModelKind {
    LogisticRegression,
    LinearSvmOvr { c: f64 },
    Elm { hidden: usize, activation: ElmActivation },
    RandomForest { trees: usize, max_depth: usize },
    Mlp,
    StackedAutoencoder { pretrain_epochs: usize },
    Cnn,
    Rnn,
    DeepFiltering,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "logreg",
            ModelKind::LinearSvmOvr { .. } => "svm",
            ModelKind::Elm { .. } => "elm",
            ModelKind::RandomForest { .. } => "rf",
            ModelKind::Mlp => "mlp",
            ModelKind::StackedAutoencoder { .. } => "sae",
            ModelKind::Cnn => "cnn",
            ModelKind::Rnn => "rnn",
            ModelKind::DeepFiltering => "deepfilter",
        }
    }

    /// Label used in rendered tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "Logistic Regression",
            ModelKind::LinearSvmOvr { .. } => "SVM (one-vs-rest)",
            ModelKind::Elm { .. } => "ELM",
            ModelKind::RandomForest { .. } => "Random Forest",
            ModelKind::Mlp => "MLP",
            ModelKind::StackedAutoencoder { .. } => "Stacked Autoencoder",
            ModelKind::Cnn => "CNN",
            ModelKind::Rnn => "RNN (BiLSTM)",
            ModelKind::DeepFiltering => "Deep Filtering",
        }
    }

    pub fn is_gradient_trained(&self) -> bool {
        !matches!(self, ModelKind::Elm { .. } | ModelKind::RandomForest { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub decay: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub train: TrainParams,
    pub features: FeatureKind,
}

impl ModelSpec {
    /// Defaults for a model name. `fast` swaps the 1e-5 learning rate for
    /// 1e-3 and the 8000-unit ELM for the 2000-unit desk variant.
    pub fn from_name(name: &str, fast: bool) -> Result<Self> {
        let kind = match name {
            "logreg" => ModelKind::LogisticRegression,
            "svm" => ModelKind::LinearSvmOvr { c: 1.0 },
            "elm" => ModelKind::Elm {
                hidden: if fast { ELM_HIDDEN_DESK } else { ELM_HIDDEN_FULL },
                activation: ElmActivation::Tanh,
            },
            "rf" => ModelKind::RandomForest { trees: 100, max_depth: 5 },
            "mlp" => ModelKind::Mlp,
            "sae" => ModelKind::StackedAutoencoder { pretrain_epochs: SAE_PRETRAIN_EPOCHS },
            "cnn" => ModelKind::Cnn,
            "rnn" => ModelKind::Rnn,
            "deepfilter" => ModelKind::DeepFiltering,
            other => {
                return Err(Error::domain(format!(
                    "unknown model '{other}'; expected one of {}",
                    MODEL_NAMES.join("|")
                )))
            }
        };
        let epochs = match kind {
            ModelKind::Mlp | ModelKind::StackedAutoencoder { .. } => 100,
            ModelKind::Cnn | ModelKind::Rnn | ModelKind::DeepFiltering => 50,
            ModelKind::LogisticRegression | ModelKind::LinearSvmOvr { .. } => 20,
            ModelKind::Elm { .. } | ModelKind::RandomForest { .. } => 0,
        };
        Ok(Self {
            kind,
            train: TrainParams { epochs, batch: 128, lr: if fast { 1e-3 } else { 1e-5 }, decay: 1e-5, seed: 42 },
            features: FeatureKind::None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ModelKind::Elm { hidden: 0, .. } => return Err(Error::domain("ELM needs hidden >= 1")),
            ModelKind::RandomForest { trees, max_depth } if trees == 0 || max_depth == 0 => {
                return Err(Error::domain("random forest needs trees >= 1 and max_depth >= 1"))
            }
            ModelKind::LinearSvmOvr { c } if !(c.is_finite() && c > 0.0) => {
                return Err(Error::domain("SVM regularization weight must be positive"))
            }
            _ => {}
        }
        let t = &self.train;
        if self.kind.is_gradient_trained() && t.batch == 0 {
            return Err(Error::domain("batch size must be >= 1"));
        }
        if !(t.lr.is_finite() && t.lr >= 0.0 && t.decay.is_finite() && t.decay >= 0.0) {
            return Err(Error::domain("learning rate and decay must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Row-major training matrix with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    pub x: Vec<f64>,
    pub labels: Vec<u8>,
    pub width: usize,
}

impl Samples {
    pub fn new(x: Vec<f64>, labels: Vec<u8>, width: usize) -> Result<Self> {
        if width == 0 || x.len() != labels.len() * width {
            return Err(Error::domain(format!(
                "{} values do not form {} rows of width {width}",
                x.len(),
                labels.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= CLASSES) {
            return Err(Error::domain(format!("label {l} out of range")));
        }
        Ok(Self { x, labels, width })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.width..(i + 1) * self.width]
    }
}

impl From<&Dataset> for Samples {
    fn from(ds: &Dataset) -> Self {
        Self { x: ds.feature_matrix(), labels: ds.labels(), width: ds.n_features() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Network(Network),
    Elm(ElmModel),
    Forest(Forest),
}

/// A fitted model: feature stage plus classifier. Immutable after training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub features: FeaturePipeline,
    pub body: ModelBody,
}

impl TrainedModel {
    pub const CLASSES: usize = CLASSES;

    /// Raw feature width accepted by [`TrainedModel::predict`].
    pub fn input_width(&self) -> usize {
        self.features.input_width()
    }

    /// Per-class scores, `rows × 8`. Forest scores are vote counts.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        let w = self.input_width();
        if x.len() % w != 0 {
            return Err(Error::domain(format!(
                "model expects feature width {w}; {} values are not a whole number of rows",
                x.len()
            )));
        }
        let rows = x.len() / w;
        let mut out = Vec::with_capacity(rows * CLASSES);
        for chunk in x.chunks(PREDICT_CHUNK * w) {
            let f = self.features.transform_rows(chunk, w)?;
            let n = chunk.len() / w;
            match &self.body {
                ModelBody::Network(net) => out.extend(net.predict(&f, n)?),
                ModelBody::Elm(m) => out.extend(m.scores(&f)?),
                ModelBody::Forest(forest) => out.extend(forest.votes(&f)?),
            }
        }
        Ok(out)
    }

    /// Class codes by argmax over scores, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<u8>> {
        if x.is_empty() {
            return Ok(Vec::new());
        }
        Ok(argmax_rows(&self.scores(x)?, CLASSES))
    }
}

/// Fraction of correct predictions, in percent.
pub fn accuracy_percent(pred: &[u8], truth: &[u8]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = pred.iter().zip(truth).filter(|(a, b)| a == b).count();
    100.0 * hits as f64 / truth.len() as f64
}

/// Trains any model kind, dispatching on the spec.
pub fn train(spec: &ModelSpec, data: &Samples) -> Result<(TrainedModel, TrainReport)> {
    match spec.kind {
        ModelKind::Elm { .. } | ModelKind::RandomForest { .. } => {
            let start = Instant::now();
            let model = match spec.kind {
                ModelKind::Elm { .. } => train_elm(spec, data)?,
                _ => train_random_forest(spec, data)?,
            };
            let secs = start.elapsed().as_secs_f64();
            let acc = accuracy_percent(&model.predict(&data.x)?, &data.labels);
            Ok((model, TrainReport::new(spec.kind.display_name(), acc, secs, 0, Vec::new())))
        }
        _ => train_gradient_model(spec, data),
    }
}

fn check_data(spec: &ModelSpec, data: &Samples) -> Result<()> {
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::domain("training set is empty"));
    }
    Ok(())
}

fn fit_features(spec: &ModelSpec, data: &Samples) -> Result<(FeaturePipeline, Vec<f64>)> {
    let pipe = FeaturePipeline::fit(spec.features, &data.x, data.len(), data.width)?;
    let x = match pipe {
        FeaturePipeline::Identity { .. } => data.x.clone(),
        _ => pipe.transform_rows(&data.x, data.width)?,
    };
    Ok((pipe, x))
}

fn network_layers(kind: ModelKind, width: usize) -> Result<Vec<LayerSpec>> {
    match kind {
        ModelKind::LogisticRegression | ModelKind::LinearSvmOvr { .. } => Ok(topology::linear(width)),
        ModelKind::Mlp => Ok(topology::mlp(width)),
        ModelKind::StackedAutoencoder { .. } => Ok(topology::stacked_autoencoder(width)),
        ModelKind::Cnn => topology::cnn(width),
        ModelKind::Rnn => topology::rnn(width),
        ModelKind::DeepFiltering => topology::deep_filtering(width),
        other => Err(Error::domain(format!("{} is not gradient-trained", other.name()))),
    }
}

/// Builds the seeded, initialized (and for the autoencoder, pretrained)
/// network for `spec` on features of width `width`.
pub fn initial_network(spec: &ModelSpec, x: &[f64], width: usize) -> Result<Network> {
    let layers = network_layers(spec.kind, width)?;
    let mut net = Network::new(width, layers)?;
    net.init_params(&mut rng_from(&[spec.train.seed, TAG_INIT]));
    if let ModelKind::StackedAutoencoder { pretrain_epochs } = spec.kind {
        let mut params = net.params().to_vec();
        let mut input = x.to_vec();
        let mut in_width = width;
        for (stage, &hidden) in topology::SAE_HIDDEN.iter().enumerate() {
            let layer = 2 * stage;
            let ae = autoencoder::pretrain(
                &input,
                in_width,
                hidden,
                &autoencoder::PretrainConfig {
                    epochs: pretrain_epochs,
                    batch: spec.train.batch,
                    lr: spec.train.lr,
                    decay: spec.train.decay,
                    seed: crate::rng::mix_seed(&[spec.train.seed, TAG_PRETRAIN, stage as u64]),
                },
            )?;
            input = ae.encode(&input)?;
            params[layer] = ae.encoder_params();
            in_width = hidden;
        }
        net.set_params(params)?;
    }
    Ok(net)
}

fn gather(x: &[f64], labels: &[u8], width: usize, idx: &[usize], xb: &mut Vec<f64>, yb: &mut Vec<u8>) {
    xb.clear();
    yb.clear();
    for &i in idx {
        xb.extend_from_slice(&x[i * width..(i + 1) * width]);
        yb.push(labels[i]);
    }
}

/// Runs mini-batch ADAM over `epochs`, returning the mean loss per epoch.
/// The example order is reshuffled every epoch from `(seed, epoch)`.
/// `l2` adds `l2/2 · ‖W‖²` over the weight block of the first layer.
pub fn fit_network(
    net: &mut Network,
    x: &[f64],
    labels: &[u8],
    params: &TrainParams,
    hinge: bool,
    l2: f64,
) -> Result<Vec<f64>> {
    let width = net.input_width();
    let n = labels.len();
    let mut adam = AdamState::new(net.params(), params.lr, params.decay);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(params.epochs);
    let (mut xb, mut yb) = (Vec::new(), Vec::new());
    let weight_len = match net.layers().first() {
        Some(LayerSpec::Dense { input, output }) => input * output,
        _ => 0,
    };
    for epoch in 0..params.epochs {
        order.shuffle(&mut rng_from(&[params.seed, TAG_SHUFFLE, epoch as u64]));
        let mut masks = rng_from(&[params.seed, TAG_DROPOUT, epoch as u64]);
        let mut total = 0.0;
        for idx in order.chunks(params.batch) {
            gather(x, labels, width, idx, &mut xb, &mut yb);
            let cache = net.forward_train(&xb, idx.len(), &mut masks)?;
            let (mut loss, grad) = if hinge {
                ovr_hinge(cache.output(), &yb, CLASSES)?
            } else {
                softmax_cross_entropy(cache.output(), &yb, CLASSES)?
            };
            let (mut grads, _) = net.backward(&cache, &grad)?;
            if l2 > 0.0 {
                let w = &net.params()[0][..weight_len];
                loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
                for (g, v) in grads[0][..weight_len].iter_mut().zip(w) {
                    *g += l2 * v;
                }
            }
            if !loss.is_finite() {
                return Err(Error::Numerical(format!("loss diverged at epoch {epoch}")));
            }
            total += loss * idx.len() as f64;
            adam.step(net.params_mut(), &grads);
        }
        trace.push(total / n as f64);
    }
    Ok(trace)
}

/// Mini-batch ADAM training for the network-backed models.
pub fn train_gradient_model(spec: &ModelSpec, data: &Samples) -> Result<(TrainedModel, TrainReport)> {
    if !spec.kind.is_gradient_trained() {
        return Err(Error::domain(format!("{} is not gradient-trained", spec.kind.name())));
    }
    check_data(spec, data)?;
    let start = Instant::now();
    let (features, x) = fit_features(spec, data)?;
    let width = features.output_width();
    let mut net = initial_network(spec, &x, width)?;
    let (hinge, l2) = match spec.kind {
        // (1 / (2 C n)) ‖W‖² summed over the training set, spread per batch.
        ModelKind::LinearSvmOvr { c } => (true, 1.0 / (c * data.len() as f64)),
        _ => (false, 0.0),
    };
    let trace = fit_network(&mut net, &x, &data.labels, &spec.train, hinge, l2)?;
    let secs = start.elapsed().as_secs_f64();
    let model = TrainedModel { spec: *spec, features, body: ModelBody::Network(net) };
    let acc = accuracy_percent(&model.predict(&data.x)?, &data.labels);
    let report = TrainReport::new(spec.kind.display_name(), acc, secs, spec.train.epochs, trace);
    Ok((model, report))
}

pub fn train_elm(spec: &ModelSpec, data: &Samples) -> Result<TrainedModel> {
    let ModelKind::Elm { hidden, .. } = spec.kind else {
        return Err(Error::domain("train_elm needs an ELM spec"));
    };
    check_data(spec, data)?;
    let (features, x) = fit_features(spec, data)?;
    let m = elm::fit(&x, &data.labels, features.output_width(), hidden, ELM_RIDGE, spec.train.seed)?;
    Ok(TrainedModel { spec: *spec, features, body: ModelBody::Elm(m) })
}

pub fn train_random_forest(spec: &ModelSpec, data: &Samples) -> Result<TrainedModel> {
    let ModelKind::RandomForest { trees, max_depth } = spec.kind else {
        return Err(Error::domain("train_random_forest needs a random-forest spec"));
    };
    check_data(spec, data)?;
    let (features, x) = fit_features(spec, data)?;
    let f = forest::fit(&x, &data.labels, features.output_width(), trees, max_depth, spec.train.seed)?;
    Ok(TrainedModel { spec: *spec, features, body: ModelBody::Forest(f) })
}
