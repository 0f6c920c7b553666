//! Layer stacks for the network-backed models, sized from the input width.

use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network, Shape};

pub const CLASSES: usize = 8;
/// Features per time step fed to the recurrent model.
pub const RNN_STEP_FEATURES: usize = 16;
pub const RNN_HIDDEN: usize = 64;
/// Dropout rate on the fully connected hidden layers of the MLP and of the
/// convolutional heads.
pub const HIDDEN_DROPOUT: f64 = 0.5;

pub fn linear(width: usize) -> Vec<LayerSpec> {
    vec![LayerSpec::dense(width, CLASSES)]
}

pub fn mlp(width: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::dense(width, 256),
        LayerSpec::ReLU,
        LayerSpec::dropout(HIDDEN_DROPOUT),
        LayerSpec::dense(256, 64),
        LayerSpec::ReLU,
        LayerSpec::dropout(HIDDEN_DROPOUT),
        LayerSpec::dense(64, CLASSES),
    ]
}

/// Encoder widths of the two stacked autoencoders.
pub const SAE_HIDDEN: [usize; 2] = [256, 64];

pub fn stacked_autoencoder(width: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::dense(width, SAE_HIDDEN[0]),
        LayerSpec::Tanh,
        LayerSpec::dense(SAE_HIDDEN[0], SAE_HIDDEN[1]),
        LayerSpec::Tanh,
        LayerSpec::dense(SAE_HIDDEN[1], CLASSES),
    ]
}

/// Appends `Flatten → Dropout → Dense(→64) → ReLU → Dropout → Dense(64→8)`
/// after a conv stack.
fn with_head(width: usize, mut convs: Vec<LayerSpec>) -> Result<Vec<LayerSpec>> {
    let body = Network::with_input_shape(Shape::flat(width), convs.clone())
        .map_err(|e| Error::domain(format!("input width {width} too short for this topology: {e}")))?;
    let flat = body.output_width();
    convs.extend([
        LayerSpec::Flatten,
        LayerSpec::dropout(HIDDEN_DROPOUT),
        LayerSpec::dense(flat, 64),
        LayerSpec::ReLU,
        LayerSpec::dropout(HIDDEN_DROPOUT),
        LayerSpec::dense(64, CLASSES),
    ]);
    Ok(convs)
}

pub fn cnn(width: usize) -> Result<Vec<LayerSpec>> {
    with_head(
        width,
        vec![
            LayerSpec::conv(1, 16, 16),
            LayerSpec::ReLU,
            LayerSpec::MaxPool1D { width: 4 },
            LayerSpec::conv(16, 32, 8),
            LayerSpec::ReLU,
            LayerSpec::MaxPool1D { width: 4 },
            LayerSpec::conv(32, 64, 8),
            LayerSpec::ReLU,
            LayerSpec::MaxPool1D { width: 4 },
        ],
    )
}

pub fn deep_filtering(width: usize) -> Result<Vec<LayerSpec>> {
    let dilated = |i, o, d| LayerSpec::Conv1D { in_channels: i, out_channels: o, kernel: 16, stride: 1, dilation: d };
    with_head(
        width,
        vec![
            dilated(1, 16, 1),
            LayerSpec::ReLU,
            LayerSpec::MaxPool1D { width: 4 },
            dilated(16, 32, 2),
            LayerSpec::ReLU,
            LayerSpec::MaxPool1D { width: 4 },
            dilated(32, 64, 2),
            LayerSpec::ReLU,
            LayerSpec::MaxPool1D { width: 4 },
        ],
    )
}

pub fn rnn(width: usize) -> Result<Vec<LayerSpec>> {
    if width % RNN_STEP_FEATURES != 0 {
        return Err(Error::domain(format!(
            "recurrent model needs a width divisible by {RNN_STEP_FEATURES}, got {width}"
        )));
    }
    Ok(vec![
        LayerSpec::BiLstm { input_size: RNN_STEP_FEATURES, hidden_size: RNN_HIDDEN },
        LayerSpec::dense(2 * RNN_HIDDEN, CLASSES),
    ])
}

/// Every network topology by model name, for an input of `width` samples.
pub fn all(width: usize) -> Result<Vec<(&'static str, Vec<LayerSpec>)>> {
    Ok(vec![
        ("logreg", linear(width)),
        ("svm", linear(width)),
        ("mlp", mlp(width)),
        ("sae", stacked_autoencoder(width)),
        ("cnn", cnn(width)?),
        ("rnn", rnn(width)?),
        ("deepfilter", deep_filtering(width)?),
    ])
}
