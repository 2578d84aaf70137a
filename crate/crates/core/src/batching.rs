//! Mini-batch sampling and virtual batching.
//!
//! A step's effective batch is `virtual_factor` disjoint micro-batches. Their
//! gradients are averaged before the update, which is how one process stands
//! in for a group of synchronous workers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::ParamVector;
use crate::problems::{BatchEval, Problem};

/// Sampling without replacement from a fresh permutation every epoch.
///
/// When the effective batch fits in the dataset, each epoch serves
/// `dataset_size / effective_batch` steps (rounded down; the permutation
/// tail is dropped). With `allow_wraparound`, a larger effective batch is
/// drawn from back-to-back permutations and one step counts as one epoch.
#[derive(Debug, Clone)]
pub struct BatchPlan {
    dataset_size: usize,
    micro_batch_size: usize,
    virtual_factor: usize,
    seed: u64,
    allow_wraparound: bool,
    epoch: usize,
    step_in_epoch: usize,
    steps_drawn: usize,
    permutation: Vec<usize>,
    /// Wraparound mode: index stream and the next permutation to append.
    stream: Vec<usize>,
    stream_epoch: u64,
}

impl BatchPlan {
    pub fn new(dataset_size: usize, micro_batch_size: usize, virtual_factor: usize, seed: u64) -> Result<Self> {
        Self::build(dataset_size, micro_batch_size, virtual_factor, seed, false)
    }

    pub fn with_wraparound(dataset_size: usize, micro_batch_size: usize, virtual_factor: usize, seed: u64) -> Result<Self> {
        Self::build(dataset_size, micro_batch_size, virtual_factor, seed, true)
    }

    fn build(dataset_size: usize, micro: usize, k: usize, seed: u64, allow_wraparound: bool) -> Result<Self> {
        if dataset_size == 0 || micro == 0 || k == 0 {
            return Err(Error::InvalidConfig(
                "dataset_size, micro_batch_size and virtual_factor must be >= 1".into(),
            ));
        }
        if micro * k > dataset_size && !allow_wraparound {
            return Err(Error::InvalidConfig(format!(
                "effective batch {} exceeds dataset size {dataset_size}; enable wraparound to sample it",
                micro * k
            )));
        }
        let mut plan = Self {
            dataset_size,
            micro_batch_size: micro,
            virtual_factor: k,
            seed,
            allow_wraparound,
            epoch: 0,
            step_in_epoch: 0,
            steps_drawn: 0,
            permutation: Vec::new(),
            stream: Vec::new(),
            stream_epoch: 0,
        };
        if !plan.wraps() {
            plan.permutation = plan.epoch_permutation(0);
        }
        Ok(plan)
    }

    fn wraps(&self) -> bool {
        self.effective_batch() > self.dataset_size
    }

    fn epoch_permutation(&self, epoch: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch);
        let mut p: Vec<usize> = (0..self.dataset_size).collect();
        p.shuffle(&mut rng);
        p
    }

    pub fn dataset_size(&self) -> usize {
        self.dataset_size
    }

    pub fn micro_batch_size(&self) -> usize {
        self.micro_batch_size
    }

    pub fn virtual_factor(&self) -> usize {
        self.virtual_factor
    }

    pub fn effective_batch(&self) -> usize {
        self.micro_batch_size * self.virtual_factor
    }

    pub fn allows_wraparound(&self) -> bool {
        self.allow_wraparound
    }

    pub fn steps_per_epoch(&self) -> usize {
        (self.dataset_size / self.effective_batch()).max(1)
    }

    /// Epoch of the next batch to be drawn.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn steps_drawn(&self) -> usize {
        self.steps_drawn
    }

    /// The next step's `virtual_factor` micro-batches.
    pub fn next_batch(&mut self) -> Vec<Vec<usize>> {
        let eb = self.effective_batch();
        let indices: Vec<usize> = if self.wraps() {
            while self.stream.len() < eb {
                let p = self.epoch_permutation(self.stream_epoch);
                self.stream.extend(p);
                self.stream_epoch += 1;
            }
            self.epoch += 1;
            self.stream.drain(..eb).collect()
        } else {
            let start = self.step_in_epoch * eb;
            let slice = self.permutation[start..start + eb].to_vec();
            self.step_in_epoch += 1;
            if self.step_in_epoch == self.steps_per_epoch() {
                self.epoch += 1;
                self.step_in_epoch = 0;
                self.permutation = self.epoch_permutation(self.epoch as u64);
            }
            slice
        };
        self.steps_drawn += 1;
        indices.chunks(self.micro_batch_size).map(<[usize]>::to_vec).collect()
    }
}

/// Drop a deterministic random subset of micro-batches, keeping
/// `max(1, round(k · (1 − fraction)))` of them in their original order.
pub fn drop_micro_batches(mut micro_batches: Vec<Vec<usize>>, fraction: f64, seed: u64, step: usize) -> Vec<Vec<usize>> {
    if fraction <= 0.0 || micro_batches.len() <= 1 {
        return micro_batches;
    }
    let k = micro_batches.len();
    let keep = ((k as f64 * (1.0 - fraction)).round() as usize).clamp(1, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    rng.set_stream(step as u64);
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    let mut out = Vec::with_capacity(keep);
    for (i, mb) in micro_batches.drain(..).enumerate() {
        if kept.binary_search(&i).is_ok() {
            out.push(mb);
        }
    }
    out
}

/// Size-weighted mean loss and gradient over the micro-batches.
///
/// Evaluations may run in parallel; the reduction always runs in
/// micro-batch order, so the result does not depend on scheduling.
pub fn averaged_gradient(problem: &Problem, weights: &ParamVector, micro_batches: &[Vec<usize>]) -> Result<BatchEval> {
    if micro_batches.is_empty() || micro_batches.iter().any(|b| b.is_empty()) {
        return Err(Error::InvalidArgument("micro-batches must be non-empty".into()));
    }
    if micro_batches.len() == 1 {
        return problem
            .evaluate(weights, &micro_batches[0])
            .map_err(|e| Error::MicroBatch {
                index: 0,
                source: Box::new(e),
            });
    }
    let evals: Vec<Result<BatchEval>> = micro_batches
        .par_iter()
        .enumerate()
        .map(|(index, mb)| {
            problem.evaluate(weights, mb).map_err(|e| Error::MicroBatch {
                index,
                source: Box::new(e),
            })
        })
        .collect();

    let total: usize = micro_batches.iter().map(Vec::len).sum();
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    for (eval, mb) in evals.into_iter().zip(micro_batches) {
        let eval = eval?;
        let weight = mb.len() as f64 / total as f64;
        loss += weight * eval.loss;
        grad.iter_mut()
            .zip(eval.gradient.iter())
            .for_each(|(acc, g)| *acc += weight * g);
    }
    Ok(BatchEval {
        loss,
        gradient: ParamVector::new(grad).map_err(|_| Error::non_finite("averaged gradient"))?,
    })
}
