//! Softmax classifiers over a [`Dataset`]: multinomial logistic regression
//! and a fully connected tanh network.
//!
//! Both use the same flat parameter layout: for each layer, the weight
//! matrix (`out × in`, row-major) followed by the bias vector.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};

use super::Dataset;
use crate::error::{Error, Result};

/// Numerically stable `log Σ exp(z) − z[label]`, writing softmax
/// probabilities into `probs`.
fn softmax_cross_entropy(logits: &[f64], label: usize, probs: &mut [f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &z) in probs.iter_mut().zip(logits) {
        *p = (z - max).exp();
        sum += *p;
    }
    probs.iter_mut().for_each(|p| *p /= sum);
    sum.ln() + max - logits[label]
}

/// Index of the largest score; ties go to the lowest index.
pub(crate) fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_batch(batch: &[usize], len: usize) -> Result<()> {
    match batch.iter().find(|&&i| i >= len) {
        Some(&index) => Err(Error::IndexOutOfRange { index, len }),
        None => Ok(()),
    }
}

fn glorot(layers: &[usize], seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Vec::new();
    for pair in layers.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit);
        w.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
        w.extend(std::iter::repeat_n(0.0, fan_out));
    }
    w
}

/// Multinomial logistic regression: `softmax(Wx + c)` with cross-entropy.
#[derive(Debug, Clone)]
pub struct SoftmaxRegression {
    data: Arc<Dataset>,
}

impl SoftmaxRegression {
    pub fn new(data: Arc<Dataset>) -> Self {
        Self { data }
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn weight_count(&self) -> usize {
        let (d, c) = (self.data.feature_dim(), self.data.num_classes());
        c * d + c
    }

    pub fn init_weights(&self, seed: u64) -> Vec<f64> {
        glorot(&[self.data.feature_dim(), self.data.num_classes()], seed)
    }

    pub(crate) fn scores(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let (d, c) = (x.len(), out.len());
        let bias = &w[c * d..];
        for (k, o) in out.iter_mut().enumerate() {
            let row = &w[k * d..(k + 1) * d];
            *o = bias[k] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Mean cross-entropy and its closed-form gradient `(p − e_y) xᵀ`.
    pub(crate) fn evaluate_on(&self, data: &Dataset, w: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        check_batch(batch, data.num_samples())?;
        let (d, c) = (data.feature_dim(), data.num_classes());
        let mut grad = vec![0.0; self.weight_count()];
        let mut logits = vec![0.0; c];
        let mut probs = vec![0.0; c];
        let mut loss = 0.0;
        for &i in batch {
            let x = data.sample(i);
            let y = data.label(i);
            self.scores(w, x, &mut logits);
            loss += softmax_cross_entropy(&logits, y, &mut probs);
            probs[y] -= 1.0;
            for k in 0..c {
                let delta = probs[k];
                let row = &mut grad[k * d..(k + 1) * d];
                row.iter_mut().zip(x).for_each(|(g, xi)| *g += delta * xi);
                grad[c * d + k] += delta;
            }
        }
        let inv = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((loss * inv, grad))
    }
}

/// Fully connected network with tanh hidden layers and a softmax output.
#[derive(Debug, Clone)]
pub struct Mlp {
    data: Arc<Dataset>,
    layers: Vec<usize>,
}

impl Mlp {
    /// `hidden` lists hidden layer widths; input and output widths come from
    /// the dataset.
    pub fn new(data: Arc<Dataset>, hidden: &[usize]) -> Result<Self> {
        if hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden layer widths must be >= 1".into()));
        }
        let mut layers = vec![data.feature_dim()];
        layers.extend_from_slice(hidden);
        layers.push(data.num_classes());
        Ok(Self { data, layers })
    }

    pub fn dataset(&self) -> &Arc<Dataset> {
        &self.data
    }

    pub fn layers(&self) -> &[usize] {
        &self.layers
    }

    pub fn weight_count(&self) -> usize {
        self.layers.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    pub fn init_weights(&self, seed: u64) -> Vec<f64> {
        glorot(&self.layers, seed)
    }

    /// Offsets of each layer's weight block in the flat vector.
    fn offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        offsets.push(0);
        for p in self.layers.windows(2) {
            at += p[0] * p[1] + p[1];
            offsets.push(at);
        }
        offsets
    }

    /// Forward pass storing every layer's activation; the last entry holds
    /// the logits.
    fn forward(&self, w: &[f64], offsets: &[usize], x: &[f64], acts: &mut [Vec<f64>]) {
        acts[0].copy_from_slice(x);
        let last = self.layers.len() - 2;
        for (l, p) in self.layers.windows(2).enumerate() {
            let (fan_in, fan_out) = (p[0], p[1]);
            let block = &w[offsets[l]..offsets[l + 1]];
            let (weights, bias) = block.split_at(fan_in * fan_out);
            let (prev, next) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            for (j, out) in next[0].iter_mut().enumerate() {
                let row = &weights[j * fan_in..(j + 1) * fan_in];
                let z = bias[j] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                *out = if l == last { z } else { z.tanh() };
            }
        }
    }

    pub(crate) fn scores(&self, w: &[f64], x: &[f64], out: &mut [f64]) {
        let offsets = self.offsets();
        let mut acts: Vec<Vec<f64>> = self.layers.iter().map(|&n| vec![0.0; n]).collect();
        self.forward(w, &offsets, x, &mut acts);
        out.copy_from_slice(acts.last().unwrap());
    }

    /// Mean cross-entropy and its gradient by backpropagation.
    pub(crate) fn evaluate_on(&self, data: &Dataset, w: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        check_batch(batch, data.num_samples())?;
        let offsets = self.offsets();
        let depth = self.layers.len() - 1;
        let mut acts: Vec<Vec<f64>> = self.layers.iter().map(|&n| vec![0.0; n]).collect();
        let mut deltas: Vec<Vec<f64>> = self.layers.iter().map(|&n| vec![0.0; n]).collect();
        let mut probs = vec![0.0; *self.layers.last().unwrap()];
        let mut grad = vec![0.0; self.weight_count()];
        let mut loss = 0.0;

        for &i in batch {
            let y = data.label(i);
            self.forward(w, &offsets, data.sample(i), &mut acts);
            loss += softmax_cross_entropy(&acts[depth], y, &mut probs);
            deltas[depth].copy_from_slice(&probs);
            deltas[depth][y] -= 1.0;

            for l in (0..depth).rev() {
                let (fan_in, fan_out) = (self.layers[l], self.layers[l + 1]);
                let block_w = &w[offsets[l]..offsets[l] + fan_in * fan_out];
                let (grad_w, grad_b) = grad[offsets[l]..offsets[l + 1]].split_at_mut(fan_in * fan_out);
                let (lower, upper) = deltas.split_at_mut(l + 1);
                let delta_out = &upper[0];
                let input = &acts[l];
                for j in 0..fan_out {
                    let dj = delta_out[j];
                    grad_b[j] += dj;
                    grad_w[j * fan_in..(j + 1) * fan_in]
                        .iter_mut()
                        .zip(input)
                        .for_each(|(g, a)| *g += dj * a);
                }
                if l > 0 {
                    // back through W, then through tanh' = 1 − a²
                    let delta_in = &mut lower[l];
                    delta_in.iter_mut().for_each(|d| *d = 0.0);
                    for j in 0..fan_out {
                        let dj = delta_out[j];
                        let row = &block_w[j * fan_in..(j + 1) * fan_in];
                        delta_in.iter_mut().zip(row).for_each(|(d, wij)| *d += dj * wij);
                    }
                    delta_in.iter_mut().zip(input).for_each(|(d, a)| *d *= 1.0 - a * a);
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= inv);
        Ok((loss * inv, grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(argmax(&[0.0, 2.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
    }

    #[test]
    fn cross_entropy_of_uniform_logits() {
        let mut p = vec![0.0; 4];
        let loss = softmax_cross_entropy(&[3.0; 4], 2, &mut p);
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn mlp_weight_count_chains_layers() {
        let data = Arc::new(Dataset::new("t", vec![0.0; 16], 16, vec![0], 10).unwrap());
        let mlp = Mlp::new(data.clone(), &[32]).unwrap();
        assert_eq!(mlp.weight_count(), 16 * 32 + 32 + 32 * 10 + 10);
        assert_eq!(mlp.init_weights(0).len(), mlp.weight_count());
        let deep = Mlp::new(data, &[8, 4]).unwrap();
        assert_eq!(deep.weight_count(), 16 * 8 + 8 + 8 * 4 + 4 + 4 * 10 + 10);
        assert_eq!(deep.layers(), &[16, 8, 4, 10]);
    }

    #[test]
    fn glorot_bounds() {
        let w = glorot(&[4, 6], 1);
        let limit = (6.0f64 / 10.0).sqrt();
        assert!(w[..24].iter().all(|v| v.abs() <= limit));
        assert!(w[24..].iter().all(|&v| v == 0.0));
        assert_eq!(w, glorot(&[4, 6], 1));
    }
}
