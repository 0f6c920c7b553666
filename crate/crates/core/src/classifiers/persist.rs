//! `GWMD` model files.
//!
//! Layout (little-endian): magic `GWMD`, u16 version, u32 descriptor length,
//! UTF-8 JSON descriptor (model spec, feature stage and body structure),
//! u32 array count, then each array as u64 length followed by f64 values.
//! Arrays follow declaration order: feature-stage arrays first, then the
//! network layer parameters, ELM projection/bias/readout, or per-tree node
//! arrays (feature, threshold, left, right, votes).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::forest::{Forest, Tree};
use super::{ElmModel, ModelBody, ModelSpec, TrainedModel, CLASSES};
use crate::error::{Error, Result};
use crate::features::{FeaturePipeline, PcaModel};
use crate::nn::{LayerSpec, Network, Shape};

pub const MODEL_MAGIC: &[u8; 4] = b"GWMD";
pub const MODEL_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
enum FeatureDesc {
    Identity { width: usize },
    /// lambda travels as a one-element array.
    Tv { width: usize },
    Pca { n_features: usize, k: usize },
    Dwt { width: usize, levels: usize },
}

#[derive(Serialize, Deserialize)]
enum BodyDesc {
    Network { input: Shape, layers: Vec<LayerSpec> },
    Elm { input: usize, hidden: usize },
    Forest { n_features: usize, nodes: Vec<usize> },
}

#[derive(Serialize, Deserialize)]
struct Descriptor {
    spec: ModelSpec,
    features: FeatureDesc,
    body: BodyDesc,
}

fn describe(m: &TrainedModel) -> (Descriptor, Vec<Vec<f64>>) {
    let mut arrays = Vec::new();
    let features = match &m.features {
        FeaturePipeline::Identity { width } => FeatureDesc::Identity { width: *width },
        FeaturePipeline::Tv { width, lambda } => {
            arrays.push(vec![*lambda]);
            FeatureDesc::Tv { width: *width }
        }
        FeaturePipeline::Pca(p) => {
            arrays.push(p.mean.clone());
            arrays.push(p.components.concat());
            arrays.push(p.explained_variance.clone());
            FeatureDesc::Pca { n_features: p.n_features(), k: p.k() }
        }
        FeaturePipeline::Dwt { width, levels } => FeatureDesc::Dwt { width: *width, levels: *levels },
    };
    let body = match &m.body {
        ModelBody::Network(net) => {
            arrays.extend(net.params().iter().cloned());
            BodyDesc::Network { input: net.input_shape(), layers: net.layers().to_vec() }
        }
        ModelBody::Elm(e) => {
            arrays.push(e.input_weights.clone());
            arrays.push(e.bias.clone());
            arrays.push(e.readout.clone());
            BodyDesc::Elm { input: e.input, hidden: e.hidden }
        }
        ModelBody::Forest(f) => {
            for t in &f.trees {
                arrays.push(t.feature.iter().map(|&v| v as f64).collect());
                arrays.push(t.threshold.clone());
                arrays.push(t.left.iter().map(|&v| v as f64).collect());
                arrays.push(t.right.iter().map(|&v| v as f64).collect());
                arrays.push(t.votes.iter().flatten().map(|&v| v as f64).collect());
            }
            BodyDesc::Forest { n_features: f.n_features, nodes: f.trees.iter().map(Tree::len).collect() }
        }
    };
    (Descriptor { spec: m.spec, features, body }, arrays)
}

pub fn encode_model(m: &TrainedModel) -> Result<Vec<u8>> {
    let (desc, arrays) = describe(m);
    let json = serde_json::to_vec(&desc).map_err(|e| Error::domain(format!("descriptor encoding: {e}")))?;
    let total: usize = arrays.iter().map(|a| 8 + 8 * a.len()).sum();
    let mut out = Vec::with_capacity(14 + json.len() + total);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(arrays.len() as u32).to_le_bytes());
    for a in &arrays {
        out.extend_from_slice(&(a.len() as u64).to_le_bytes());
        for v in a {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_model(m: &TrainedModel, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&encode_model(m)?)?;
    w.flush()?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail(&self, at: usize, msg: impl Into<String>) -> Error {
        Error::Format { offset: at as u64, msg: msg.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if n > self.buf.len() - self.pos {
            return Err(self.fail(self.pos, format!("truncated while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Pops arrays in order, checking each length against the descriptor.
struct Arrays {
    items: std::vec::IntoIter<(usize, Vec<f64>)>,
    end: usize,
}

impl Arrays {
    fn next(&mut self, len: usize, what: &str) -> Result<Vec<f64>> {
        let (at, a) = self
            .items
            .next()
            .ok_or_else(|| Error::Format { offset: self.end as u64, msg: format!("missing array for {what}") })?;
        if a.len() != len {
            return Err(Error::Format {
                offset: at as u64,
                msg: format!("{what}: expected {len} values, found {}", a.len()),
            });
        }
        Ok(a)
    }

    fn indices(&mut self, len: usize, what: &str) -> Result<Vec<u32>> {
        let at = self.end;
        self.next(len, what)?
            .into_iter()
            .map(|v| {
                if v >= 0.0 && v <= u32::MAX as f64 && v.fract() == 0.0 {
                    Ok(v as u32)
                } else {
                    Err(Error::Format { offset: at as u64, msg: format!("{what}: {v} is not an index") })
                }
            })
            .collect()
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<TrainedModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MODEL_MAGIC {
        return Err(r.fail(0, "bad magic, expected GWMD"));
    }
    let version = u16::from_le_bytes(r.take(2, "version")?.try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(r.fail(4, format!("unsupported version {version}")));
    }
    let dlen = r.u32("descriptor length")? as usize;
    let dat = r.pos;
    let desc: Descriptor = serde_json::from_slice(r.take(dlen, "descriptor")?)
        .map_err(|e| r.fail(dat, format!("bad descriptor: {e}")))?;
    let count = r.u32("array count")? as usize;
    let mut items = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let at = r.pos;
        let len = u64::from_le_bytes(r.take(8, "array length")?.try_into().unwrap());
        let len = usize::try_from(len).map_err(|_| r.fail(at, "array length overflows"))?;
        let raw = r.take(len.checked_mul(8).ok_or_else(|| r.fail(at, "array length overflows"))?, "array")?;
        items.push((at, raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect()));
    }
    if r.pos != bytes.len() {
        return Err(r.fail(r.pos, "trailing bytes after last array"));
    }
    let mut arrays = Arrays { items: items.into_iter(), end: bytes.len() };
    let bad = |msg: String| Error::Format { offset: dat as u64, msg };

    let features = match desc.features {
        FeatureDesc::Identity { width } => FeaturePipeline::Identity { width },
        FeatureDesc::Tv { width } => FeaturePipeline::Tv { width, lambda: arrays.next(1, "TV lambda")?[0] },
        FeatureDesc::Pca { n_features, k } => {
            let mean = arrays.next(n_features, "PCA mean")?;
            let flat = arrays.next(n_features * k, "PCA components")?;
            let explained_variance = arrays.next(k, "PCA variances")?;
            let components = flat.chunks(n_features.max(1)).map(<[f64]>::to_vec).collect();
            FeaturePipeline::Pca(PcaModel { mean, components, explained_variance })
        }
        FeatureDesc::Dwt { width, levels } => FeaturePipeline::Dwt { width, levels },
    };
    let body = match desc.body {
        BodyDesc::Network { input, layers } => {
            let mut net = Network::with_input_shape(input, layers).map_err(|e| bad(e.to_string()))?;
            let params = net
                .layers()
                .iter()
                .enumerate()
                .map(|(i, l)| arrays.next(l.param_count(), &format!("layer {i} parameters")))
                .collect::<Result<Vec<_>>>()?;
            net.set_params(params)?;
            ModelBody::Network(net)
        }
        BodyDesc::Elm { input, hidden } => ModelBody::Elm(ElmModel {
            input,
            hidden,
            input_weights: arrays.next(input * hidden, "ELM input weights")?,
            bias: arrays.next(hidden, "ELM bias")?,
            readout: arrays.next(hidden * CLASSES, "ELM readout")?,
        }),
        BodyDesc::Forest { n_features, nodes } => {
            let mut trees = Vec::with_capacity(nodes.len());
            for (t, &n) in nodes.iter().enumerate() {
                let feature = arrays.indices(n, &format!("tree {t} features"))?;
                let threshold = arrays.next(n, &format!("tree {t} thresholds"))?;
                let left = arrays.indices(n, &format!("tree {t} left children"))?;
                let right = arrays.indices(n, &format!("tree {t} right children"))?;
                let flat = arrays.indices(n * CLASSES, &format!("tree {t} votes"))?;
                let votes = flat.chunks_exact(CLASSES).map(|c| c.try_into().unwrap()).collect();
                let tree = Tree { feature, threshold, left, right, votes };
                validate_tree(&tree, n_features).map_err(|m| bad(format!("tree {t}: {m}")))?;
                trees.push(tree);
            }
            ModelBody::Forest(Forest { n_features, trees })
        }
    };
    if let Some((at, _)) = arrays.items.next() {
        return Err(Error::Format { offset: at as u64, msg: "unexpected extra array".into() });
    }
    let model = TrainedModel { spec: desc.spec, features, body };
    let body_width = match &model.body {
        ModelBody::Network(n) => n.input_width(),
        ModelBody::Elm(e) => e.input,
        ModelBody::Forest(f) => f.n_features,
    };
    if body_width != model.features.output_width() {
        return Err(bad(format!(
            "feature stage emits width {} but classifier expects {body_width}",
            model.features.output_width()
        )));
    }
    Ok(model)
}

/// Children must point forward so prediction always terminates.
fn validate_tree(t: &Tree, n_features: usize) -> std::result::Result<(), String> {
    if t.is_empty() {
        return Err("no nodes".into());
    }
    for i in 0..t.len() {
        if t.feature[i] == super::forest::LEAF {
            continue;
        }
        if t.feature[i] as usize >= n_features {
            return Err(format!("node {i} splits on feature {}", t.feature[i]));
        }
        for c in [t.left[i], t.right[i]] {
            if c as usize <= i || c as usize >= t.len() {
                return Err(format!("node {i} has invalid child {c}"));
            }
        }
    }
    Ok(())
}

pub fn read_model(path: &Path) -> Result<TrainedModel> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_model(&bytes)
}
