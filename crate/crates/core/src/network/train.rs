use rand::seq::SliceRandom;

use super::mat::Mat;
use super::policy::{Params, Qbn, QuantMode, RecurrentPolicy};
use crate::error::{Error, Result};
use crate::seed;

/// A sequence of `(observation, action)` steps. Every action is fed back
/// into the memory; only steps marked in `labelled` (all when `None`) count
/// towards the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub steps: Vec<(usize, usize)>,
    pub weight: f64,
    pub labelled: Option<Vec<bool>>,
}

impl Sequence {
    pub fn is_labelled(&self, t: usize) -> bool {
        self.labelled.as_ref().is_none_or(|l| l[t])
    }

    pub fn num_labelled(&self) -> usize {
        (0..self.steps.len()).filter(|&t| self.is_labelled(t)).count()
    }
}

/// Behaviour-cloning dataset.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingBatch {
    pub sequences: Vec<Sequence>,
}

impl TrainingBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, steps: Vec<(usize, usize)>, weight: f64) {
        self.sequences.push(Sequence { steps, weight, labelled: None });
    }

    /// Adds a sequence whose unmarked steps only provide context.
    pub fn push_partial(&mut self, steps: Vec<(usize, usize)>, labelled: Vec<bool>, weight: f64) {
        let labelled = if labelled.iter().all(|&l| l) { None } else { Some(labelled) };
        self.sequences.push(Sequence { steps, weight, labelled });
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_steps(&self) -> usize {
        self.sequences.iter().map(|s| s.steps.len()).sum()
    }

    /// Merges identical step sequences by summing their weights, keeping
    /// first-occurrence order.
    pub fn merge_duplicates(&mut self) {
        type Key = (Vec<(usize, usize)>, Option<Vec<bool>>);
        let mut index: std::collections::HashMap<Key, usize> = std::collections::HashMap::new();
        let mut merged: Vec<Sequence> = Vec::new();
        for seq in self.sequences.drain(..) {
            let key = (seq.steps.clone(), seq.labelled.clone());
            match index.get(&key) {
                Some(&i) => merged[i].weight += seq.weight,
                None => {
                    index.insert(key, merged.len());
                    merged.push(seq);
                }
            }
        }
        self.sequences = merged;
    }

    pub fn validate(&self, net: &RecurrentPolicy) -> Result<()> {
        if self.sequences.iter().all(|s| s.num_labelled() == 0 || s.weight == 0.0) {
            return Err(Error::Network("training batch is empty".into()));
        }
        for (i, seq) in self.sequences.iter().enumerate() {
            if !(seq.weight.is_finite() && seq.weight >= 0.0) {
                return Err(Error::Network(format!("sequence {i} has invalid weight {}", seq.weight)));
            }
            if seq.labelled.as_ref().is_some_and(|l| l.len() != seq.steps.len()) {
                return Err(Error::Network(format!("sequence {i} has a label mask of the wrong length")));
            }
            for (t, &(z, a)) in seq.steps.iter().enumerate() {
                if z >= net.num_observations() || a >= net.num_actions() {
                    return Err(Error::Network(format!("sequence {i} has out-of-range step ({z}, {a})")));
                }
                if !seq.is_labelled(t) {
                    continue;
                }
                if let Some(mask) = net.action_mask() {
                    if !mask[z][a] {
                        return Err(Error::Network(format!("sequence {i} labels observation {z} with masked action {a}")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 32,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.batch_size == 0 || !(self.clip_norm > 0.0) {
            return Err(Error::Network("learning rate, batch size and clip norm must be positive".into()));
        }
        Ok(())
    }
}

/// Adam optimiser over a fixed list of parameter slices.
#[derive(Debug, Clone)]
pub(crate) struct Adam {
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        Adam {
            lr,
            t: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: &[&[f64]]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (k, p) in params.into_iter().enumerate() {
            let (m, v, g) = (&mut self.m[k], &mut self.v[k], grads[k]);
            for i in 0..p.len() {
                m[i] = Self::B1 * m[i] + (1.0 - Self::B1) * g[i];
                v[i] = Self::B2 * v[i] + (1.0 - Self::B2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn clip(grads: &mut [&mut [f64]], max_norm: f64) {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|x| x * x).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flat_map(|g| g.iter_mut()).for_each(|x| *x *= s);
    }
}

fn weighted_steps(seqs: &[&Sequence]) -> f64 {
    seqs.iter().map(|s| s.weight * s.num_labelled() as f64).sum()
}

impl RecurrentPolicy {
    /// Weighted mean per-step cross-entropy of `batch` and its gradient.
    pub fn loss_and_gradient(&self, batch: &TrainingBatch, mode: QuantMode) -> (f64, Params) {
        let seqs: Vec<&Sequence> = batch.sequences.iter().collect();
        self.minibatch_loss(&seqs, mode)
    }

    fn minibatch_loss(&self, seqs: &[&Sequence], mode: QuantMode) -> (f64, Params) {
        let mut grads = self.params.zeros_like();
        let denom = weighted_steps(seqs);
        if denom <= 0.0 {
            return (0.0, grads);
        }
        let mut loss = 0.0;
        for seq in seqs {
            if seq.num_labelled() == 0 || seq.weight == 0.0 {
                continue;
            }
            let scale = seq.weight / denom;
            loss += scale * self.sequence_loss(&seq.steps, seq.labelled.as_deref(), mode, scale, Some(&mut grads));
        }
        (loss, grads)
    }

    /// Mean per-step cross-entropy of `batch` (quantizer active if present).
    pub fn mean_loss(&self, batch: &TrainingBatch) -> f64 {
        let seqs: Vec<&Sequence> = batch.sequences.iter().collect();
        let denom = weighted_steps(&seqs);
        let total: f64 = seqs
            .iter()
            .filter(|s| s.num_labelled() > 0 && s.weight > 0.0)
            .map(|s| s.weight * self.sequence_loss(&s.steps, s.labelled.as_deref(), QuantMode::Ternary, 1.0, None))
            .sum();
        total / denom
    }

    /// Per-dimension mean squared reconstruction error of `hidden` through
    /// the bottleneck, with its gradient (QBN tensors only are non-zero).
    pub fn reconstruction_loss_and_gradient(&self, hidden: &[Vec<f64>], mode: QuantMode) -> (f64, Params) {
        let mut grads = self.params.zeros_like();
        let refs: Vec<&Vec<f64>> = hidden.iter().collect();
        let loss = self.reconstruction_minibatch(&refs, mode, &mut grads);
        (loss, grads)
    }

    fn reconstruction_minibatch(&self, hidden: &[&Vec<f64>], mode: QuantMode, grads: &mut Params) -> f64 {
        let denom = (hidden.len() * self.hidden_size()) as f64;
        let mut loss = 0.0;
        for h in hidden {
            let (out, cache) = self.bottleneck_forward(h.to_vec(), mode);
            let diff: Vec<f64> = out.iter().zip(h.iter()).map(|(o, x)| o - x).collect();
            loss += diff.iter().map(|d| d * d).sum::<f64>() / denom;
            let dm = diff.iter().map(|d| 2.0 * d / denom).collect();
            self.bottleneck_backward(h, cache.as_ref(), dm, grads);
        }
        loss
    }

    /// Per-dimension reconstruction MSE with the quantizer active.
    pub fn reconstruction_mse(&self, hidden: &[Vec<f64>]) -> f64 {
        let refs: Vec<&Vec<f64>> = hidden.iter().collect();
        let mut scratch = self.params.zeros_like();
        self.reconstruction_minibatch(&refs, QuantMode::Ternary, &mut scratch)
    }
}

fn grad_slices(g: &Params) -> Vec<&[f64]> {
    g.tensors().into_iter().map(|t| t.3).collect()
}

/// Behaviour cloning by minibatch Adam on the weighted cross-entropy.
/// Returns the trained network and the mean loss of every epoch.
pub fn train_bc(net: &RecurrentPolicy, batch: &TrainingBatch, hp: &Hyperparams) -> Result<(RecurrentPolicy, Vec<f64>)> {
    hp.validate()?;
    batch.validate(net)?;
    let mut net = net.clone();
    let sizes: Vec<usize> = net.params.tensors().iter().map(|t| t.3.len()).collect();
    let mut adam = Adam::new(hp.learning_rate, &sizes);
    let mut order: Vec<usize> = (0..batch.len()).filter(|&i| batch.sequences[i].num_labelled() > 0).collect();
    let total = weighted_steps(&order.iter().map(|&i| &batch.sequences[i]).collect::<Vec<_>>());
    let mut trace = Vec::with_capacity(hp.epochs);
    for epoch in 0..hp.epochs {
        order.shuffle(&mut seed::rng(hp.seed, "shuffle", epoch as u64));
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(hp.batch_size) {
            let seqs: Vec<&crate::network::Sequence> = chunk.iter().map(|&i| &batch.sequences[i]).collect();
            let (loss, mut grads) = net.minibatch_loss(&seqs, QuantMode::Ternary);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            epoch_loss += loss * weighted_steps(&seqs);
            clip(&mut grads.slices_mut(), hp.clip_norm);
            adam.step(net.params.slices_mut(), &grad_slices(&grads));
        }
        let mean = epoch_loss / total;
        if !mean.is_finite() || !net.params.all_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        log::debug!("epoch {epoch}: loss {mean:.6}");
        trace.push(mean);
    }
    Ok((net, trace))
}

/// Inserts a `bh`-neuron quantized bottleneck trained as an autoencoder on
/// `hidden`. Returns the network with the bottleneck and the final
/// per-dimension reconstruction MSE.
pub fn insert_qbn(net: &RecurrentPolicy, bh: usize, hidden: &[Vec<f64>], hp: &Hyperparams) -> Result<(RecurrentPolicy, f64)> {
    hp.validate()?;
    if bh == 0 {
        return Err(Error::Network("bottleneck width must be at least 1".into()));
    }
    if hidden.is_empty() {
        return Err(Error::Network("hidden-state dataset is empty".into()));
    }
    let d = net.hidden_size();
    if hidden.iter().any(|h| h.len() != d) {
        return Err(Error::Network(format!("hidden vectors must have length {d}")));
    }
    let mut rng = seed::rng(hp.seed, "qbn-init", bh as u64);
    let qbn = Qbn {
        enc_w: Mat::uniform(bh, d, 1.0 / (d as f64).sqrt(), &mut rng),
        enc_b: vec![0.0; bh],
        dec_w: Mat::uniform(d, bh, 1.0 / (bh as f64).sqrt(), &mut rng),
        dec_b: vec![0.0; d],
    };
    let mut net = net.without_qbn().with_qbn(qbn);
    let qbn_sizes = [bh * d, bh, d * bh, d];
    let mut adam = Adam::new(hp.learning_rate, &qbn_sizes);
    let mut order: Vec<usize> = (0..hidden.len()).collect();
    for epoch in 0..hp.epochs {
        order.shuffle(&mut seed::rng(hp.seed, "qbn-shuffle", epoch as u64));
        for chunk in order.chunks(hp.batch_size) {
            let hs: Vec<&Vec<f64>> = chunk.iter().map(|&i| &hidden[i]).collect();
            let mut grads = net.params.zeros_like();
            let loss = net.reconstruction_minibatch(&hs, QuantMode::Ternary, &mut grads);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
            let gq = grads.qbn.as_mut().expect("QBN present");
            let mut gslices = [
                gq.enc_w.data.as_mut_slice(),
                gq.enc_b.as_mut_slice(),
                gq.dec_w.data.as_mut_slice(),
                gq.dec_b.as_mut_slice(),
            ];
            clip(&mut gslices, hp.clip_norm);
            let q = net.params.qbn.as_mut().expect("QBN present");
            adam.step(
                vec![&mut q.enc_w.data, &mut q.enc_b, &mut q.dec_w.data, &mut q.dec_b],
                &[&gq.enc_w.data, &gq.enc_b, &gq.dec_w.data, &gq.dec_b],
            );
        }
    }
    let mse = net.reconstruction_mse(hidden);
    if !mse.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: hp.epochs });
    }
    Ok((net, mse))
}
