//! Bidirectional LSTM over a sequence laid out as `steps × features` per
//! example. The layer emits the concatenation of the forward direction's
//! last hidden state and the backward direction's last (i.e. first-in-time)
//! hidden state.
//!
//! Parameter layout per direction: `Wx (F × 4H)`, `Wh (H × 4H)`, `b (4H)`,
//! gate columns ordered input, forget, cell, output. The forward direction
//! comes first.

use super::gemm::{gemm_strided, matmul, matmul_nt, matmul_tn};

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy)]
pub struct LstmDims {
    pub batch: usize,
    pub steps: usize,
    pub features: usize,
    pub hidden: usize,
}

impl LstmDims {
    pub fn direction_params(&self) -> usize {
        let g = 4 * self.hidden;
        self.features * g + self.hidden * g + g
    }
}

/// Per-direction record of every step, in processing order.
#[derive(Debug, Clone)]
pub struct DirectionCache {
    /// Activated gates `[i, f, g, o]`, `steps × batch × 4H`.
    gates: Vec<f64>,
    /// Cell states after each step, `steps × batch × H`.
    cells: Vec<f64>,
    /// Hidden states after each step, `steps × batch × H`.
    hiddens: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LstmCache {
    pub(crate) forward: DirectionCache,
    pub(crate) backward: DirectionCache,
}

fn time_index(reverse: bool, steps: usize, s: usize) -> usize {
    if reverse {
        steps - 1 - s
    } else {
        s
    }
}

fn run_direction(d: LstmDims, params: &[f64], x: &[f64], reverse: bool) -> DirectionCache {
    let LstmDims { batch, steps, features, hidden } = d;
    let g4 = 4 * hidden;
    let (wx, rest) = params.split_at(features * g4);
    let (wh, bias) = rest.split_at(hidden * g4);
    let mut gates = vec![0.0; steps * batch * g4];
    let mut cells = vec![0.0; steps * batch * hidden];
    let mut hiddens = vec![0.0; steps * batch * hidden];
    let zeros = vec![0.0; batch * hidden];
    let row = steps * features;
    for s in 0..steps {
        let t = time_index(reverse, steps, s);
        let z = &mut gates[s * batch * g4..(s + 1) * batch * g4];
        for r in z.chunks_exact_mut(g4) {
            r.copy_from_slice(bias);
        }
        // x_t is a strided view: row b at offset b*row + t*features
        gemm_strided(batch, features, g4, 1.0, &x[t * features..], row, 1, wx, g4, 1, 1.0, z, g4, 1);
        let (h_prev, c_prev): (&[f64], &[f64]) = if s == 0 {
            (&zeros, &zeros)
        } else {
            (
                &hiddens[(s - 1) * batch * hidden..s * batch * hidden],
                &cells[(s - 1) * batch * hidden..s * batch * hidden],
            )
        };
        matmul(batch, hidden, g4, h_prev, wh, 1.0, z);
        let mut c_new = vec![0.0; batch * hidden];
        let mut h_new = vec![0.0; batch * hidden];
        for b in 0..batch {
            let zr = &mut z[b * g4..(b + 1) * g4];
            for j in 0..hidden {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[hidden + j]);
                let g = zr[2 * hidden + j].tanh();
                let o = sigmoid(zr[3 * hidden + j]);
                zr[j] = i;
                zr[hidden + j] = f;
                zr[2 * hidden + j] = g;
                zr[3 * hidden + j] = o;
                let c = f * c_prev[b * hidden + j] + i * g;
                c_new[b * hidden + j] = c;
                h_new[b * hidden + j] = o * c.tanh();
            }
        }
        cells[s * batch * hidden..(s + 1) * batch * hidden].copy_from_slice(&c_new);
        hiddens[s * batch * hidden..(s + 1) * batch * hidden].copy_from_slice(&h_new);
    }
    DirectionCache { gates, cells, hiddens }
}

/// Returns `(output batch × 2H, cache)`.
pub fn forward(d: LstmDims, params: &[f64], x: &[f64]) -> (Vec<f64>, LstmCache) {
    let per = d.direction_params();
    let fwd = run_direction(d, &params[..per], x, false);
    let bwd = run_direction(d, &params[per..2 * per], x, true);
    let h = d.hidden;
    let last = (d.steps - 1) * d.batch * h;
    let mut out = vec![0.0; d.batch * 2 * h];
    for b in 0..d.batch {
        out[b * 2 * h..b * 2 * h + h].copy_from_slice(&fwd.hiddens[last + b * h..last + (b + 1) * h]);
        out[b * 2 * h + h..(b + 1) * 2 * h].copy_from_slice(&bwd.hiddens[last + b * h..last + (b + 1) * h]);
    }
    (out, LstmCache { forward: fwd, backward: bwd })
}

fn backprop_direction(
    d: LstmDims,
    params: &[f64],
    x: &[f64],
    cache: &DirectionCache,
    d_last_h: Vec<f64>,
    reverse: bool,
    grad: &mut [f64],
    dx: &mut [f64],
) {
    let LstmDims { batch, steps, features, hidden } = d;
    let g4 = 4 * hidden;
    let (wx, rest) = params.split_at(features * g4);
    let (wh, _) = rest.split_at(hidden * g4);
    let (gwx, grest) = grad.split_at_mut(features * g4);
    let (gwh, gb) = grest.split_at_mut(hidden * g4);
    let row = steps * features;
    let mut dh = d_last_h;
    let mut dc = vec![0.0; batch * hidden];
    let mut dz = vec![0.0; batch * g4];
    let zeros = vec![0.0; batch * hidden];
    for s in (0..steps).rev() {
        let t = time_index(reverse, steps, s);
        let gates = &cache.gates[s * batch * g4..(s + 1) * batch * g4];
        let cells = &cache.cells[s * batch * hidden..(s + 1) * batch * hidden];
        let c_prev: &[f64] =
            if s == 0 { &zeros } else { &cache.cells[(s - 1) * batch * hidden..s * batch * hidden] };
        let h_prev: &[f64] =
            if s == 0 { &zeros } else { &cache.hiddens[(s - 1) * batch * hidden..s * batch * hidden] };
        for b in 0..batch {
            for j in 0..hidden {
                let gi = b * g4;
                let (i, f, g, o) =
                    (gates[gi + j], gates[gi + hidden + j], gates[gi + 2 * hidden + j], gates[gi + 3 * hidden + j]);
                let k = b * hidden + j;
                let tc = cells[k].tanh();
                let dhk = dh[k];
                let dck = dc[k] + dhk * o * (1.0 - tc * tc);
                dz[gi + j] = dck * g * i * (1.0 - i);
                dz[gi + hidden + j] = dck * c_prev[k] * f * (1.0 - f);
                dz[gi + 2 * hidden + j] = dck * i * (1.0 - g * g);
                dz[gi + 3 * hidden + j] = dhk * tc * o * (1.0 - o);
                dc[k] = dck * f;
            }
        }
        // dWx += x_tᵀ dz
        gemm_strided(features, batch, g4, 1.0, &x[t * features..], 1, row, &dz, g4, 1, 1.0, gwx, g4, 1);
        matmul_tn(hidden, batch, g4, h_prev, &dz, 1.0, gwh);
        for r in dz.chunks_exact(g4) {
            for (a, v) in gb.iter_mut().zip(r) {
                *a += v;
            }
        }
        // dx_t += dz Wxᵀ, written through the same strided view
        gemm_strided(batch, g4, features, 1.0, &dz, g4, 1, wx, 1, g4, 1.0, &mut dx[t * features..], row, 1);
        let mut dh_prev = vec![0.0; batch * hidden];
        matmul_nt(batch, g4, hidden, &dz, wh, 0.0, &mut dh_prev);
        dh = dh_prev;
    }
}

/// Accumulates parameter gradients into `grad` and returns the input gradient.
pub fn backward(d: LstmDims, params: &[f64], x: &[f64], cache: &LstmCache, dout: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let per = d.direction_params();
    let h = d.hidden;
    let mut dx = vec![0.0; x.len()];
    let split = |offset: usize| -> Vec<f64> {
        (0..d.batch).flat_map(|b| dout[b * 2 * h + offset..b * 2 * h + offset + h].iter().copied()).collect()
    };
    let (gf, gb) = grad.split_at_mut(per);
    backprop_direction(d, &params[..per], x, &cache.forward, split(0), false, gf, &mut dx);
    backprop_direction(d, &params[per..2 * per], x, &cache.backward, split(h), true, &mut gb[..per], &mut dx);
    dx
}
