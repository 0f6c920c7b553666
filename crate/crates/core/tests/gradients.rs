use gwt_core::classifiers::topology;
use gwt_core::nn::gradcheck::{check_function, check_network};
use gwt_core::nn::loss::softmax_cross_entropy;
use gwt_core::nn::{AdamState, LayerSpec, Network, Shape};
use gwt_core::rng::rng_from_seed;
use rand::Rng;
use rand_distr::StandardNormal;

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn gaussian(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn labels(batch: usize) -> Vec<u8> {
    (0..batch).map(|i| (i * 3 % 8) as u8).collect()
}

/// Initialized network plus small random biases so every parameter matters.
fn net(input: Shape, layers: Vec<LayerSpec>, seed: u64) -> Network {
    let mut n = Network::with_input_shape(input, layers).unwrap();
    let mut rng = rng_from_seed(seed);
    n.init_params(&mut rng);
    let layers = n.layers().to_vec();
    for (p, l) in n.params_mut().iter_mut().zip(&layers) {
        let bias_from = match *l {
            LayerSpec::Dense { input, output } => input * output,
            LayerSpec::Conv1D { in_channels, out_channels, kernel, .. } => out_channels * in_channels * kernel,
            _ => continue,
        };
        for b in &mut p[bias_from..] {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    n
}

fn check(n: &Network, batch: usize, per_tensor: Option<usize>, seed: u64) -> f64 {
    let x = gaussian(batch * n.input_width(), seed);
    let r = check_network(n, &x, &labels(batch), H, per_tensor, &mut rng_from_seed(seed + 1)).unwrap();
    assert!(r.checked > 0);
    r.max_rel_error
}

#[test]
fn dense_and_smooth_activations() {
    let n = net(
        Shape::flat(7),
        vec![
            LayerSpec::dense(7, 6),
            LayerSpec::Tanh,
            LayerSpec::dense(6, 5),
            LayerSpec::Sigmoid,
            LayerSpec::dense(5, 8),
        ],
        1,
    );
    let e = check(&n, 4, None, 10);
    assert!(e < TOL, "{e}");
}

#[test]
fn three_layer_relu_mlp_every_parameter() {
    let n = net(Shape::flat(12), vec![
        LayerSpec::dense(12, 10),
        LayerSpec::ReLU,
        LayerSpec::dense(10, 9),
        LayerSpec::ReLU,
        LayerSpec::dense(9, 8),
    ], 2);
    let e = check(&n, 4, None, 11);
    assert!(e < TOL, "{e}");
}

#[test]
fn conv1d_with_stride_and_dilation() {
    let layers = vec![
        LayerSpec::Conv1D { in_channels: 2, out_channels: 3, kernel: 3, stride: 2, dilation: 2 },
        LayerSpec::Tanh,
        LayerSpec::Flatten,
        LayerSpec::dense(3 * 8, 8),
    ];
    let n = net(Shape { channels: 2, length: 19 }, layers, 3);
    let e = check(&n, 4, None, 12);
    assert!(e < TOL, "{e}");
}

#[test]
fn maxpool() {
    let layers = vec![
        LayerSpec::conv(1, 2, 3),
        LayerSpec::MaxPool1D { width: 3 },
        LayerSpec::Flatten,
        LayerSpec::dense(2 * 6, 8),
    ];
    let n = net(Shape::flat(20), layers, 4);
    let e = check(&n, 4, None, 13);
    assert!(e < TOL, "{e}");
}

#[test]
fn bilstm() {
    let layers = vec![LayerSpec::BiLstm { input_size: 3, hidden_size: 4 }, LayerSpec::dense(8, 8)];
    let n = net(Shape::flat(15), layers, 5);
    let e = check(&n, 4, None, 14);
    assert!(e < TOL, "{e}");
}

#[test]
fn softmax_cross_entropy_gradient() {
    let logits = gaussian(4 * 8, 6);
    let y = labels(4);
    let (_, g) = softmax_cross_entropy(&logits, &y, 8).unwrap();
    let e = check_function(|l| softmax_cross_entropy(l, &y, 8).unwrap().0, &logits, &g, H);
    assert!(e < TOL, "{e}");
}

#[test]
fn full_topologies_at_batch_four() {
    for (name, layers) in topology::all(1024).unwrap() {
        let n = net(Shape::flat(1024), layers, 7);
        let e = check(&n, 4, Some(24), 15);
        assert!(e < TOL, "{name}: {e}");
    }
}

#[test]
fn loss_nonincreasing_over_first_adam_steps() {
    let batch = 16;
    let x = gaussian(batch * 1024, 20);
    let y = labels(batch);
    for (name, layers) in topology::all(1024).unwrap() {
        let mut n = net(Shape::flat(1024), layers, 8);
        let mut adam = AdamState::new(n.params(), 1e-3, 1e-5);
        let mut prev = f64::INFINITY;
        for step in 0..10 {
            let cache = n.forward(&x, batch).unwrap();
            let (loss, g) = softmax_cross_entropy(cache.output(), &y, 8).unwrap();
            assert!(loss <= prev, "{name}: step {step} loss {loss} > {prev}");
            prev = loss;
            let (grads, _) = n.backward(&cache, &g).unwrap();
            adam.step(n.params_mut(), &grads);
        }
    }
}
