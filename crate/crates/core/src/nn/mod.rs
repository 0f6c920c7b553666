//! Minimal reverse-mode training core shared by every gradient-trained
//! classifier: a fixed set of layers, losses, ADAM and initialization.
//!
//! Activations travel as flat row-major buffers of `batch × features`,
//! where each layer interprets an example's features through its [`Shape`]
//! (`channels × length`, channel-major).

pub mod adam;
pub mod gemm;
pub mod gradcheck;
pub mod loss;
pub mod lstm;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use gemm::{gemm_strided, matmul, matmul_nt, matmul_tn};
use lstm::{LstmCache, LstmDims};

pub use adam::AdamState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Dense { input: usize, output: usize },
    Conv1D { in_channels: usize, out_channels: usize, kernel: usize, stride: usize, dilation: usize },
    MaxPool1D { width: usize },
    ReLU,
    Tanh,
    Sigmoid,
    Flatten,
    /// Consumes a flat `steps × input_size` sequence.
    BiLstm { input_size: usize, hidden_size: usize },
    /// Rate scaled by 10⁶ so the spec stays `Eq`.
    Dropout { rate_ppm: u32 },
}

impl LayerSpec {
    pub fn conv(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        LayerSpec::Conv1D { in_channels, out_channels, kernel, stride: 1, dilation: 1 }
    }

    pub fn dense(input: usize, output: usize) -> Self {
        LayerSpec::Dense { input, output }
    }

    pub fn dropout(rate: f64) -> Self {
        LayerSpec::Dropout { rate_ppm: (rate * 1e6).round() as u32 }
    }

    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Dense { input, output } => input * output + output,
            LayerSpec::Conv1D { in_channels, out_channels, kernel, .. } => {
                out_channels * in_channels * kernel + out_channels
            }
            LayerSpec::BiLstm { input_size, hidden_size } => {
                2 * LstmDims { batch: 0, steps: 0, features: input_size, hidden: hidden_size }.direction_params()
            }
            _ => 0,
        }
    }

    fn is_activation(&self) -> bool {
        matches!(self, LayerSpec::ReLU | LayerSpec::Tanh | LayerSpec::Sigmoid)
    }
}

/// Per-example layout: `channels × length`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub length: usize,
}

impl Shape {
    pub fn flat(length: usize) -> Self {
        Self { channels: 1, length }
    }

    pub fn size(&self) -> usize {
        self.channels * self.length
    }
}

fn output_shape(index: usize, spec: &LayerSpec, s: Shape) -> Result<Shape> {
    let bad = |msg: String| Err(Error::domain(format!("layer {index} ({spec:?}): {msg}")));
    match *spec {
        LayerSpec::Dense { input, output } => {
            if input == 0 || output == 0 {
                return bad("sizes must be >= 1".into());
            }
            if s.channels != 1 || s.length != input {
                return bad(format!("expects flat input of {input}, got {}x{}", s.channels, s.length));
            }
            Ok(Shape::flat(output))
        }
        LayerSpec::Conv1D { in_channels, out_channels, kernel, stride, dilation } => {
            if [in_channels, out_channels, kernel, stride, dilation].contains(&0) {
                return bad("sizes must be >= 1".into());
            }
            if s.channels != in_channels {
                return bad(format!("expects {in_channels} channels, got {}", s.channels));
            }
            let span = dilation * (kernel - 1) + 1;
            if s.length < span {
                return bad(format!("input length {} shorter than receptive field {span}", s.length));
            }
            Ok(Shape { channels: out_channels, length: (s.length - span) / stride + 1 })
        }
        LayerSpec::MaxPool1D { width } => {
            if width == 0 || s.length < width {
                return bad(format!("pool width {width} invalid for length {}", s.length));
            }
            Ok(Shape { channels: s.channels, length: s.length / width })
        }
        LayerSpec::ReLU | LayerSpec::Tanh | LayerSpec::Sigmoid => Ok(s),
        LayerSpec::Flatten => Ok(Shape::flat(s.size())),
        LayerSpec::BiLstm { input_size, hidden_size } => {
            if input_size == 0 || hidden_size == 0 {
                return bad("sizes must be >= 1".into());
            }
            if s.channels != 1 || s.length % input_size != 0 {
                return bad(format!("flat input {} not divisible into steps of {input_size}", s.size()));
            }
            Ok(Shape::flat(2 * hidden_size))
        }
        LayerSpec::Dropout { rate_ppm } => {
            if rate_ppm >= 1_000_000 {
                return bad("dropout rate must be < 1".into());
            }
            Ok(s)
        }
    }
}

/// A layer stack with its parameters, one flat buffer per layer.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<LayerSpec>,
    shapes: Vec<Shape>,
    pub(crate) params: Vec<Vec<f64>>,
    generation: u64,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.shapes == other.shapes && self.params == other.params
    }
}

#[derive(Debug, Clone)]
enum Aux {
    None,
    Pool(Vec<u32>),
    Lstm(Box<LstmCache>),
    Mask(Vec<f64>),
}

/// Intermediates retained by a forward pass for [`Network::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    generation: u64,
    batch: usize,
    /// `inputs[i]` is the input to layer `i`; the last entry is the output.
    activations: Vec<Vec<f64>>,
    aux: Vec<Aux>,
}

impl ForwardCache {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().unwrap()
    }
}

impl Network {
    /// Validates the layer stack for an input of `input_width` features and
    /// allocates zeroed parameters.
    pub fn new(input_width: usize, layers: Vec<LayerSpec>) -> Result<Self> {
        Self::with_input_shape(Shape::flat(input_width), layers)
    }

    /// Like [`Network::new`] for multi-channel inputs.
    pub fn with_input_shape(input: Shape, layers: Vec<LayerSpec>) -> Result<Self> {
        if input.size() == 0 {
            return Err(Error::domain("input width must be >= 1"));
        }
        let mut shapes = vec![input];
        for (i, l) in layers.iter().enumerate() {
            let next = output_shape(i, l, *shapes.last().unwrap())?;
            shapes.push(next);
        }
        let params = layers.iter().map(|l| vec![0.0; l.param_count()]).collect();
        Ok(Self { layers, shapes, params, generation: 0 })
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_width(&self) -> usize {
        self.shapes[0].size()
    }

    pub fn input_shape(&self) -> Shape {
        self.shapes[0]
    }

    pub fn output_width(&self) -> usize {
        self.shapes.last().unwrap().size()
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [Vec<f64>] {
        self.generation += 1;
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<Vec<f64>>) -> Result<()> {
        if params.len() != self.layers.len()
            || params.iter().zip(&self.layers).any(|(p, l)| p.len() != l.param_count())
        {
            return Err(Error::domain("parameter shapes do not match the layer stack"));
        }
        self.params = params;
        self.generation += 1;
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Vec::len).sum()
    }

    /// Inference pass (dropout disabled).
    pub fn predict(&self, x: &[f64], batch: usize) -> Result<Vec<f64>> {
        Ok(self.forward_impl(x, batch, None::<&mut rand_chacha::ChaCha8Rng>)?.activations.pop().unwrap())
    }

    /// Forward pass without dropout, keeping intermediates.
    pub fn forward(&self, x: &[f64], batch: usize) -> Result<ForwardCache> {
        self.forward_impl(x, batch, None::<&mut rand_chacha::ChaCha8Rng>)
    }

    /// Forward pass with dropout masks drawn from `rng`.
    pub fn forward_train(&self, x: &[f64], batch: usize, rng: &mut impl Rng) -> Result<ForwardCache> {
        self.forward_impl(x, batch, Some(rng))
    }

    fn forward_impl<R: Rng>(&self, x: &[f64], batch: usize, mut rng: Option<&mut R>) -> Result<ForwardCache> {
        if batch == 0 || x.len() != batch * self.input_width() {
            return Err(Error::domain(format!(
                "layer 0: batch buffer of {} values does not hold {batch} examples of width {}",
                x.len(),
                self.input_width()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        activations.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = activations.last().unwrap();
            let (out, a) = self.layer_forward(i, layer, input, batch, rng.as_deref_mut());
            activations.push(out);
            aux.push(a);
        }
        Ok(ForwardCache { generation: self.generation, batch, activations, aux })
    }

    fn layer_forward<R: Rng>(
        &self,
        i: usize,
        layer: &LayerSpec,
        x: &[f64],
        batch: usize,
        rng: Option<&mut R>,
    ) -> (Vec<f64>, Aux) {
        let s_in = self.shapes[i];
        let s_out = self.shapes[i + 1];
        let p = &self.params[i];
        match *layer {
            LayerSpec::Dense { input, output } => {
                let (w, b) = p.split_at(input * output);
                let mut y: Vec<f64> = b.iter().copied().cycle().take(batch * output).collect();
                matmul(batch, input, output, x, w, 1.0, &mut y);
                (y, Aux::None)
            }
            LayerSpec::Conv1D { in_channels, out_channels, kernel, stride, dilation } => {
                let ck = in_channels * kernel;
                let lout = s_out.length;
                let cols = im2col(x, batch, s_in, kernel, stride, dilation, lout);
                let (w, b) = p.split_at(out_channels * ck);
                let n = batch * lout;
                let mut y = vec![0.0; batch * out_channels * lout];
                // y[b][co][t] = Σ w[co][r] cols[r][b*lout + t]; write directly with strides per example
                for bi in 0..batch {
                    let yb = &mut y[bi * out_channels * lout..(bi + 1) * out_channels * lout];
                    for (co, row) in yb.chunks_exact_mut(lout).enumerate() {
                        row.fill(b[co]);
                    }
                    gemm_strided(out_channels, ck, lout, 1.0, w, ck, 1, &cols[bi * lout..], n, 1, 1.0, yb, lout, 1);
                }
                (y, Aux::None)
            }
            LayerSpec::MaxPool1D { width } => {
                let (c, l, lo) = (s_in.channels, s_in.length, s_out.length);
                let mut y = vec![0.0; batch * c * lo];
                let mut idx = vec![0u32; batch * c * lo];
                for bc in 0..batch * c {
                    let src = &x[bc * l..bc * l + l];
                    for t in 0..lo {
                        let mut best = t * width;
                        for j in t * width + 1..(t + 1) * width {
                            if src[j] > src[best] {
                                best = j;
                            }
                        }
                        y[bc * lo + t] = src[best];
                        idx[bc * lo + t] = (bc * l + best) as u32;
                    }
                }
                (y, Aux::Pool(idx))
            }
            LayerSpec::ReLU => (x.iter().map(|v| v.max(0.0)).collect(), Aux::None),
            LayerSpec::Tanh => (x.iter().map(|v| v.tanh()).collect(), Aux::None),
            LayerSpec::Sigmoid => (x.iter().map(|&v| lstm::sigmoid(v)).collect(), Aux::None),
            LayerSpec::Flatten => (x.to_vec(), Aux::None),
            LayerSpec::BiLstm { input_size, hidden_size } => {
                let d = LstmDims { batch, steps: s_in.length / input_size, features: input_size, hidden: hidden_size };
                let (y, cache) = lstm::forward(d, p, x);
                (y, Aux::Lstm(Box::new(cache)))
            }
            LayerSpec::Dropout { rate_ppm } => match rng {
                Some(rng) if rate_ppm > 0 => {
                    let rate = rate_ppm as f64 * 1e-6;
                    let keep = 1.0 / (1.0 - rate);
                    let mask: Vec<f64> =
                        (0..x.len()).map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep }).collect();
                    (x.iter().zip(&mask).map(|(a, m)| a * m).collect(), Aux::Mask(mask))
                }
                _ => (x.to_vec(), Aux::None),
            },
        }
    }

    /// Reverse-mode gradients of `sum(grad_output ⊙ output)` with respect to
    /// every parameter, given the cache of a forward pass on the current
    /// parameters. Returns `(parameter gradients, input gradient)`.
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64]) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
        if cache.generation != self.generation || cache.activations.len() != self.layers.len() + 1 {
            return Err(Error::domain("stale forward cache: parameters changed since the forward pass"));
        }
        let batch = cache.batch;
        if grad_output.len() != batch * self.output_width() {
            return Err(Error::domain(format!(
                "layer {}: output gradient has {} values, expected {}",
                self.layers.len().saturating_sub(1),
                grad_output.len(),
                batch * self.output_width()
            )));
        }
        let mut grads: Vec<Vec<f64>> = self.layers.iter().map(|l| vec![0.0; l.param_count()]).collect();
        let mut g = grad_output.to_vec();
        for i in (0..self.layers.len()).rev() {
            g = self.layer_backward(i, cache, &g, &mut grads[i]);
        }
        Ok((grads, g))
    }

    fn layer_backward(&self, i: usize, cache: &ForwardCache, dy: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let batch = cache.batch;
        let x = &cache.activations[i];
        let y = &cache.activations[i + 1];
        let s_in = self.shapes[i];
        let s_out = self.shapes[i + 1];
        let p = &self.params[i];
        match self.layers[i] {
            LayerSpec::Dense { input, output } => {
                let (w, _) = p.split_at(input * output);
                let (gw, gb) = grad.split_at_mut(input * output);
                matmul_tn(input, batch, output, x, dy, 1.0, gw);
                for r in dy.chunks_exact(output) {
                    for (a, v) in gb.iter_mut().zip(r) {
                        *a += v;
                    }
                }
                let mut dx = vec![0.0; batch * input];
                matmul_nt(batch, output, input, dy, w, 0.0, &mut dx);
                dx
            }
            LayerSpec::Conv1D { in_channels, out_channels, kernel, stride, dilation } => {
                let ck = in_channels * kernel;
                let lout = s_out.length;
                let n = batch * lout;
                let cols = im2col(x, batch, s_in, kernel, stride, dilation, lout);
                let (w, _) = p.split_at(out_channels * ck);
                let (gw, gb) = grad.split_at_mut(out_channels * ck);
                // dy as (out_channels × batch·lout) with strides, no copy
                for bi in 0..batch {
                    let dyb = &dy[bi * out_channels * lout..(bi + 1) * out_channels * lout];
                    gemm_strided(out_channels, lout, ck, 1.0, dyb, lout, 1, &cols[bi * lout..], 1, n, 1.0, gw, ck, 1);
                    for (co, row) in dyb.chunks_exact(lout).enumerate() {
                        gb[co] += row.iter().sum::<f64>();
                    }
                }
                let mut dcols = vec![0.0; ck * n];
                for bi in 0..batch {
                    let dyb = &dy[bi * out_channels * lout..(bi + 1) * out_channels * lout];
                    gemm_strided(ck, out_channels, lout, 1.0, w, 1, ck, dyb, lout, 1, 0.0, &mut dcols[bi * lout..], n, 1);
                }
                col2im(&dcols, batch, s_in, kernel, stride, dilation, lout)
            }
            LayerSpec::MaxPool1D { .. } => {
                let Aux::Pool(idx) = &cache.aux[i] else { unreachable!("pool cache") };
                let mut dx = vec![0.0; batch * s_in.size()];
                for (g, &j) in dy.iter().zip(idx) {
                    dx[j as usize] += g;
                }
                dx
            }
            LayerSpec::ReLU => x.iter().zip(dy).map(|(&v, &g)| if v > 0.0 { g } else { 0.0 }).collect(),
            LayerSpec::Tanh => y.iter().zip(dy).map(|(&t, &g)| g * (1.0 - t * t)).collect(),
            LayerSpec::Sigmoid => y.iter().zip(dy).map(|(&s, &g)| g * s * (1.0 - s)).collect(),
            LayerSpec::Flatten => dy.to_vec(),
            LayerSpec::BiLstm { input_size, hidden_size } => {
                let Aux::Lstm(lc) = &cache.aux[i] else { unreachable!("lstm cache") };
                let d = LstmDims { batch, steps: s_in.length / input_size, features: input_size, hidden: hidden_size };
                lstm::backward(d, p, x, lc, dy, grad)
            }
            LayerSpec::Dropout { .. } => match &cache.aux[i] {
                Aux::Mask(m) => dy.iter().zip(m).map(|(g, m)| g * m).collect(),
                _ => dy.to_vec(),
            },
        }
    }

    /// Fills parameters: He-uniform for layers feeding a ReLU, Glorot-uniform
    /// otherwise (including LSTM matrices); biases zero except the LSTM
    /// forget gate, which starts at [`LSTM_FORGET_BIAS`].
    pub fn init_params(&mut self, rng: &mut impl Rng) {
        let n = self.layers.len();
        for i in 0..n {
            let next_act = self.layers[i + 1..]
                .iter()
                .find(|l| l.is_activation() || l.param_count() > 0)
                .copied();
            let relu_follows = matches!(next_act, Some(LayerSpec::ReLU));
            let p = &mut self.params[i];
            match self.layers[i] {
                LayerSpec::Dense { input, output } => {
                    let bound = init_bound(relu_follows, input, output);
                    fill_uniform(&mut p[..input * output], bound, rng);
                }
                LayerSpec::Conv1D { in_channels, out_channels, kernel, .. } => {
                    let bound = init_bound(relu_follows, in_channels * kernel, out_channels * kernel);
                    fill_uniform(&mut p[..out_channels * in_channels * kernel], bound, rng);
                }
                LayerSpec::BiLstm { input_size, hidden_size } => {
                    let g4 = 4 * hidden_size;
                    let per = p.len() / 2;
                    for dir in 0..2 {
                        let base = dir * per;
                        fill_uniform(&mut p[base..base + input_size * g4], glorot(input_size, g4), rng);
                        let wh = base + input_size * g4;
                        fill_uniform(&mut p[wh..wh + hidden_size * g4], glorot(hidden_size, g4), rng);
                        let forget = wh + hidden_size * g4 + hidden_size;
                        p[forget..forget + hidden_size].fill(LSTM_FORGET_BIAS);
                    }
                }
                _ => {}
            }
        }
        self.generation += 1;
    }
}

/// Initial forget-gate bias. With zero the cell forgets half its state per
/// step and a transient mid-sequence never reaches either end.
pub const LSTM_FORGET_BIAS: f64 = 1.0;

pub fn he_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

pub fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn init_bound(relu: bool, fan_in: usize, fan_out: usize) -> f64 {
    if relu {
        he_bound(fan_in)
    } else {
        glorot(fan_in, fan_out)
    }
}

fn fill_uniform(p: &mut [f64], bound: f64, rng: &mut impl Rng) {
    for v in p {
        *v = rng.random_range(-bound..bound);
    }
}

/// Builds and initializes a network in one step.
pub fn init_network(input_width: usize, layers: Vec<LayerSpec>, rng: &mut impl Rng) -> Result<Network> {
    let mut net = Network::new(input_width, layers)?;
    net.init_params(rng);
    Ok(net)
}

/// `cols[(ci*K + k) * (batch*lout) + b*lout + t] = x[b][ci][t*stride + k*dilation]`.
fn im2col(x: &[f64], batch: usize, s: Shape, kernel: usize, stride: usize, dilation: usize, lout: usize) -> Vec<f64> {
    let n = batch * lout;
    let mut cols = vec![0.0; s.channels * kernel * n];
    for ci in 0..s.channels {
        for k in 0..kernel {
            let row = &mut cols[(ci * kernel + k) * n..(ci * kernel + k + 1) * n];
            for b in 0..batch {
                let src = &x[(b * s.channels + ci) * s.length + k * dilation..];
                let dst = &mut row[b * lout..(b + 1) * lout];
                if stride == 1 {
                    dst.copy_from_slice(&src[..lout]);
                } else {
                    for (t, d) in dst.iter_mut().enumerate() {
                        *d = src[t * stride];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(dcols: &[f64], batch: usize, s: Shape, kernel: usize, stride: usize, dilation: usize, lout: usize) -> Vec<f64> {
    let n = batch * lout;
    let mut dx = vec![0.0; batch * s.size()];
    for ci in 0..s.channels {
        for k in 0..kernel {
            let row = &dcols[(ci * kernel + k) * n..(ci * kernel + k + 1) * n];
            for b in 0..batch {
                let base = (b * s.channels + ci) * s.length + k * dilation;
                let src = &row[b * lout..(b + 1) * lout];
                for (t, v) in src.iter().enumerate() {
                    dx[base + t * stride] += v;
                }
            }
        }
    }
    dx
}

/// Index of the largest score per row; ties resolve to the lowest index.
pub fn argmax_rows(scores: &[f64], width: usize) -> Vec<u8> {
    scores
        .chunks_exact(width)
        .map(|r| {
            let mut best = 0;
            for (j, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = j;
                }
            }
            best as u8
        })
        .collect()
}
