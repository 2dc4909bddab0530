//! Fully connected network with rectified-linear hidden layers and a softmax
//! output, trained by mini-batch SGD on cross-entropy.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{softmax, EncodedData, TrainConfig};
use crate::error::{Error, Result};
use crate::num17;
use crate::rng::{seeded, seeded_stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

/// Layer sizes plus all weights in canonical order: for each layer, the
/// `out × in` weight matrix row-major, then its `out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub version: u32,
    pub shape: Vec<usize>,
    pub activation: Activation,
    #[serde(serialize_with = "num17::vec")]
    pub weights: Vec<f64>,
}

pub fn parameter_count(shape: &[usize]) -> usize {
    shape.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

impl ModelParams {
    pub fn new(shape: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if shape.len() < 2 || shape.contains(&0) {
            return Err(Error::invalid("network needs at least an input and an output layer, all non-empty"));
        }
        if weights.len() != parameter_count(&shape) {
            return Err(Error::DimensionMismatch { expected: parameter_count(&shape), got: weights.len() });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("non-finite network weight"));
        }
        Ok(ModelParams { version: super::MODEL_FORMAT_VERSION, shape, activation: Activation::Relu, weights })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = parameter_count(&shape);
        Self::new(shape, vec![0.0; n])
    }

    /// He-uniform weights, zero biases.
    pub fn init(shape: Vec<usize>, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let mut weights = Vec::with_capacity(parameter_count(&shape));
        for w in shape.windows(2) {
            let limit = (6.0 / w[0] as f64).sqrt();
            weights.extend((0..w[0] * w[1]).map(|_| rng.random_range(-limit..limit)));
            weights.extend(std::iter::repeat_n(0.0, w[1]));
        }
        Self::new(shape, weights)
    }

    pub fn n_inputs(&self) -> usize {
        self.shape[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.shape.last().expect("validated shape")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let p: ModelParams = serde_json::from_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)?;
        Self::new(p.shape, p.weights)
    }

    /// Offsets of (weights, biases) for each layer.
    fn layout(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.shape
            .windows(2)
            .map(|w| {
                let start = off;
                off += (w[0] + 1) * w[1];
                (start, start + w[0] * w[1])
            })
            .collect()
    }

    /// Activations of every layer; the last entry holds the logits.
    fn forward(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let layout = self.layout();
        let n_layers = layout.len();
        let mut acts = vec![x.to_vec()];
        for (l, ((w_off, b_off), dims)) in layout.iter().zip(self.shape.windows(2)).enumerate() {
            let (fan_in, fan_out) = (dims[0], dims[1]);
            let input = acts.last().expect("non-empty");
            let mut out: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &self.weights[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                    row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + self.weights[b_off + o]
                })
                .collect();
            if l + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }

    pub fn predict_row(&self, x: &[f64]) -> Vec<f64> {
        softmax(self.forward(x).last().expect("has output"))
    }
}

fn check_shape(params: &ModelParams, data: &EncodedData) -> Result<()> {
    if params.n_inputs() != data.d {
        return Err(Error::DimensionMismatch { expected: params.n_inputs(), got: data.d });
    }
    if let Some(&y) = data.y.iter().max() {
        if y >= params.n_outputs() {
            return Err(Error::invalid(format!("class index {y} exceeds network outputs {}", params.n_outputs())));
        }
    }
    Ok(())
}

/// Mean cross-entropy over `rows` plus `l2/2 · Σ W²` (biases excluded), and
/// its gradient by backpropagation.
pub fn mlp_loss_grad(params: &ModelParams, data: &EncodedData, rows: &[usize], l2: f64) -> (f64, Vec<f64>) {
    let layout = params.layout();
    let mut grad = vec![0.0; params.weights.len()];
    let mut loss = 0.0;
    for &i in rows {
        let acts = params.forward(data.row(i));
        let p = softmax(acts.last().expect("output"));
        let y = data.y[i];
        loss -= p[y].max(1e-300).ln();
        let mut delta: Vec<f64> = p.iter().enumerate().map(|(c, pc)| pc - if c == y { 1.0 } else { 0.0 }).collect();
        for l in (0..layout.len()).rev() {
            let (w_off, b_off) = layout[l];
            let (fan_in, fan_out) = (params.shape[l], params.shape[l + 1]);
            let input = &acts[l];
            for o in 0..fan_out {
                let g = &mut grad[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                for (gj, xj) in g.iter_mut().zip(input) {
                    *gj += delta[o] * xj;
                }
                grad[b_off + o] += delta[o];
            }
            if l > 0 {
                let mut prev = vec![0.0; fan_in];
                for (o, d) in delta.iter().enumerate() {
                    let row = &params.weights[w_off + o * fan_in..w_off + (o + 1) * fan_in];
                    for (pj, wj) in prev.iter_mut().zip(row) {
                        *pj += d * wj;
                    }
                }
                // relu derivative on the hidden activation
                for (pj, a) in prev.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *pj = 0.0;
                    }
                }
                delta = prev;
            }
        }
    }
    let n = rows.len().max(1) as f64;
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    if l2 > 0.0 {
        for &(w_off, b_off) in &layout {
            for j in w_off..b_off {
                loss += 0.5 * l2 * params.weights[j] * params.weights[j];
                grad[j] += l2 * params.weights[j];
            }
        }
    }
    (loss, grad)
}

/// Mini-batch SGD for `cfg.epochs` epochs. Also returns the mean batch loss
/// of every epoch.
pub fn mlp_train_local_traced(params: &ModelParams, data: &EncodedData, cfg: &TrainConfig) -> Result<(ModelParams, Vec<f64>)> {
    cfg.validate()?;
    check_shape(params, data)?;
    let mut p = params.clone();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let n = data.n();
    if n == 0 {
        return if cfg.epochs == 0 { Ok((p, trace)) } else { Err(Error::EmptyDataset) };
    }
    let batch = cfg.batch_size.min(n);
    for e in 0..cfg.epochs {
        let mut rng = seeded_stream(cfg.seed, cfg.epoch_offset + e as u64);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0;
        for rows in order.chunks(batch) {
            let (loss, grad) = mlp_loss_grad(&p, data, rows, cfg.l2);
            for (w, g) in p.weights.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
            epoch_loss += loss;
            batches += 1;
        }
        trace.push(epoch_loss / batches as f64);
    }
    if p.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::invalid("training diverged (non-finite weights); lower the learning rate"));
    }
    Ok((p, trace))
}

pub fn mlp_train_local(params: &ModelParams, data: &EncodedData, cfg: &TrainConfig) -> Result<ModelParams> {
    Ok(mlp_train_local_traced(params, data, cfg)?.0)
}

/// Class probabilities for each row of a flat row-major matrix.
pub fn mlp_predict_proba(params: &ModelParams, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = params.n_inputs();
    if x.len() % d != 0 {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() % d });
    }
    Ok(x.chunks_exact(d).map(|r| params.predict_row(r)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize) -> EncodedData {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let t = i as f64 / n as f64;
            x.extend([t, 1.0 - t, (3.0 * t).sin(), t * t]);
            y.push(usize::from(t > 0.5));
        }
        EncodedData { d: 4, x, y }
    }

    #[test]
    fn zero_weights_are_uniform() {
        let p = ModelParams::zeros(vec![4, 3, 5]).unwrap();
        for row in mlp_predict_proba(&p, &toy(3).x).unwrap() {
            assert!(row.iter().all(|v| (v - 0.2).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_epochs_identity() {
        let p = ModelParams::init(vec![4, 3, 2], 1).unwrap();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::mlp_default() };
        let out = mlp_train_local(&p, &toy(10), &cfg).unwrap();
        assert_eq!(out, p);
    }

    #[test]
    fn parameter_count_matches() {
        assert_eq!(parameter_count(&[4, 2, 2]), 5 * 2 + 3 * 2);
        let p = ModelParams::init(vec![7, 32, 22], 0).unwrap();
        assert_eq!(p.weights.len(), 8 * 32 + 33 * 22);
        assert!(ModelParams::new(vec![2, 2], vec![0.0; 5]).is_err());
    }

    #[test]
    fn shape_mismatch() {
        let p = ModelParams::init(vec![3, 2], 1).unwrap();
        assert!(mlp_train_local(&p, &toy(4), &TrainConfig::mlp_default()).is_err());
    }

    #[test]
    fn split_epochs_match_one_run() {
        let p = ModelParams::init(vec![4, 6, 2], 3).unwrap();
        let data = toy(30);
        let cfg = TrainConfig { epochs: 6, batch_size: 7, ..TrainConfig::mlp_default() };
        let whole = mlp_train_local(&p, &data, &cfg).unwrap();
        let half = TrainConfig { epochs: 3, ..cfg.clone() };
        let a = mlp_train_local(&p, &data, &half).unwrap();
        let b = mlp_train_local(&a, &data, &TrainConfig { epoch_offset: 3, ..half }).unwrap();
        assert_eq!(whole, b);
    }
}
