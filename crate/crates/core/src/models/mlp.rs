//! ReLU multilayer perceptron with a single sigmoid output, trained by
//! full-batch gradient descent on the log-loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, ModelParams, TrainConfig};
use crate::error::{Error, Result};
use crate::linalg::RowMatrix;
use crate::rng::{rng_from_seed, substream};

const GRAD_TOL: f64 = 1e-5;

/// Fully connected layer; `weights` is `outputs x inputs`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(super::dot(row, x) + self.bias[o]);
        }
    }
}

pub(super) fn check_layers(layers: &[DenseLayer]) -> Result<()> {
    if layers.len() < 2 {
        return Err(Error::InvalidConfig("an MLP needs at least one hidden layer".into()));
    }
    for (i, l) in layers.iter().enumerate() {
        if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
            return Err(Error::Schema(format!("layer {i} has inconsistent shapes")));
        }
        if i > 0 && layers[i - 1].outputs != l.inputs {
            return Err(Error::Schema(format!("layer {i} does not chain")));
        }
    }
    if layers.last().map(|l| l.outputs) != Some(1) {
        return Err(Error::Schema("output layer must have one unit".into()));
    }
    Ok(())
}

/// Output logit; hidden layers use ReLU.
pub(super) fn forward_logit(layers: &[DenseLayer], x: &[f64]) -> f64 {
    let mut a = x.to_vec();
    let mut z = Vec::new();
    let last = layers.len() - 1;
    for (i, layer) in layers.iter().enumerate() {
        layer.apply(&a, &mut z);
        if i < last {
            z.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        std::mem::swap(&mut a, &mut z);
    }
    a[0]
}

fn xavier_init(widths: &[usize], seed: u64) -> Vec<DenseLayer> {
    let mut rng = rng_from_seed(substream(seed, "mlp-init"));
    widths
        .windows(2)
        .map(|w| {
            let (inputs, outputs) = (w[0], w[1]);
            let limit = (6.0 / (inputs + outputs) as f64).sqrt();
            DenseLayer {
                inputs,
                outputs,
                weights: (0..inputs * outputs)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect(),
                bias: vec![0.0; outputs],
            }
        })
        .collect()
}

/// Mean log-loss + `lambda / 2 * sum |W|^2` with gradients per layer.
fn loss_and_grad(
    layers: &[DenseLayer],
    x: &RowMatrix,
    y: &[u8],
    lambda: f64,
) -> (f64, Vec<DenseLayer>) {
    let n = y.len() as f64;
    let mut grads: Vec<DenseLayer> = layers
        .iter()
        .map(|l| DenseLayer {
            inputs: l.inputs,
            outputs: l.outputs,
            weights: vec![0.0; l.weights.len()],
            bias: vec![0.0; l.outputs],
        })
        .collect();
    let last = layers.len() - 1;
    let mut acts: Vec<Vec<f64>> = vec![Vec::new(); layers.len() + 1];
    let mut loss = 0.0;
    let mut delta = Vec::new();
    let mut prev_delta = Vec::new();
    for (row, &label) in x.rows().zip(y) {
        acts[0].clear();
        acts[0].extend_from_slice(row);
        for (i, layer) in layers.iter().enumerate() {
            let (head, tail) = acts.split_at_mut(i + 1);
            layer.apply(&head[i], &mut tail[0]);
            if i < last {
                tail[0].iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        let logit = acts[last + 1][0];
        let t = f64::from(label);
        loss += if logit > 0.0 {
            logit + (-logit).exp().ln_1p()
        } else {
            logit.exp().ln_1p()
        } - t * logit;

        delta.clear();
        delta.push(sigmoid(logit) - t);
        for i in (0..layers.len()).rev() {
            let layer = &layers[i];
            let input = &acts[i];
            let g = &mut grads[i];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let gw = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (gv, a) in gw.iter_mut().zip(input) {
                    *gv += d * a;
                }
            }
            if i == 0 {
                break;
            }
            prev_delta.clear();
            prev_delta.resize(layer.inputs, 0.0);
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let w = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (p, wv) in prev_delta.iter_mut().zip(w) {
                    *p += d * wv;
                }
            }
            // ReLU derivative of the previous layer's activation
            for (p, a) in prev_delta.iter_mut().zip(&acts[i]) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            std::mem::swap(&mut delta, &mut prev_delta);
        }
    }
    loss /= n;
    for (g, l) in grads.iter_mut().zip(layers) {
        for (gw, w) in g.weights.iter_mut().zip(&l.weights) {
            *gw = *gw / n + lambda * w;
            loss += 0.5 * lambda * w * w;
        }
        g.bias.iter_mut().for_each(|b| *b /= n);
    }
    (loss, grads)
}

pub(super) fn fit(x: &RowMatrix, y: &[u8], cfg: &TrainConfig) -> Result<(ModelParams, bool)> {
    let mut widths = vec![x.ncols()];
    widths.extend(&cfg.hidden_layers);
    widths.push(1);
    let mut layers = xavier_init(&widths, cfg.seed);
    let mut converged = false;
    for _ in 0..cfg.epochs {
        let (loss, grads) = loss_and_grad(&layers, x, y, cfg.ridge_lambda);
        if !loss.is_finite() {
            return Err(Error::Training("MLP loss became NaN".into()));
        }
        let norm: f64 = grads
            .iter()
            .flat_map(|g| g.weights.iter().chain(&g.bias))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if norm < GRAD_TOL {
            converged = true;
            break;
        }
        for (l, g) in layers.iter_mut().zip(&grads) {
            for (w, gw) in l.weights.iter_mut().zip(&g.weights) {
                *w -= cfg.learning_rate * gw;
            }
            for (b, gb) in l.bias.iter_mut().zip(&g.bias) {
                *b -= cfg.learning_rate * gb;
            }
        }
    }
    Ok((ModelParams::Mlp { layers }, converged))
}
