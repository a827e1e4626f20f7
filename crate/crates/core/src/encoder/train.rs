//! Task heads and their objectives: softmax cross-entropy for sequence
//! classification, binary cross-entropy for fused pairs, and a Euclidean
//! triplet margin loss for the two-tower embedder. All three share one
//! mini-batch loop with AdamW and a linear warmup/decay schedule.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::context::{fuse_pair, TaggedSequence};
use crate::error::{Error, Result};

use super::stub::uniform;
use super::{euclidean, Embedded, EncoderConfig, EncoderModel, PooledVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of steps spent warming up; the rest decays linearly to zero.
    pub warmup_fraction: f64,
    pub weight_decay: f64,
    /// Euclidean margin of the triplet objective.
    pub triplet_margin: f64,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 2,
            batch_size: 32,
            learning_rate: 2e-5,
            warmup_fraction: 0.1,
            weight_decay: 0.01,
            triplet_margin: 1.0,
            negatives_per_positive: 50,
            seed: 42,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.epochs == 0 || self.batch_size == 0 || self.negatives_per_positive == 0 {
            return bad("epochs, batch_size and negatives_per_positive must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.triplet_margin > 0.0) {
            return bad("learning_rate and triplet_margin must be positive");
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction < 1.0) {
            return bad("warmup_fraction must lie in (0, 1)");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }
}

/// Learning-rate multiplier for 0-based `step` of `total` steps: rises
/// linearly to 1 at the last warmup step, then falls linearly to 0 at the
/// final step.
pub fn lr_multiplier(step: usize, total: usize, warmup_fraction: f64) -> f64 {
    if total <= 1 {
        return 1.0;
    }
    let warm = ((warmup_fraction * total as f64).ceil() as usize).clamp(1, total - 1);
    if step < warm {
        (step + 1) as f64 / warm as f64
    } else {
        (total - 1).saturating_sub(step) as f64 / (total - warm) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub steps: Vec<StepLog>,
}

impl TrainingLog {
    pub fn final_loss(&self) -> Option<f64> {
        self.steps.last().map(|s| s.loss)
    }

    /// Mean step loss per epoch.
    pub fn epoch_losses(&self) -> Vec<f64> {
        let mut out: Vec<(f64, usize)> = Vec::new();
        for s in &self.steps {
            if out.len() <= s.epoch {
                out.resize(s.epoch + 1, (0.0, 0));
            }
            out[s.epoch].0 += s.loss;
            out[s.epoch].1 += 1;
        }
        out.into_iter().map(|(s, n)| s / n.max(1) as f64).collect()
    }
}

/// Decoupled weight decay Adam.
struct AdamW {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
    weight_decay: f64,
}

impl AdamW {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(shapes: &[usize], weight_decay: f64) -> Self {
        Self {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
            weight_decay,
        }
    }

    fn step(&mut self, blocks: Vec<&mut [f64]>, grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for (((p, g), m), v) in blocks.into_iter().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                p[i] *= 1.0 - lr * self.weight_decay;
                m[i] = Self::BETA1 * m[i] + (1.0 - Self::BETA1) * g[i];
                v[i] = Self::BETA2 * v[i] + (1.0 - Self::BETA2) * g[i] * g[i];
                p[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + Self::EPS);
            }
        }
    }
}

trait Trainable: Sync {
    fn shapes(&self) -> Vec<usize>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;
}

fn zeros(shapes: &[usize]) -> Vec<Vec<f64>> {
    shapes.iter().map(|&n| vec![0.0; n]).collect()
}

fn train_loop<M, E, F>(model: &mut M, examples: &[E], cfg: &TrainingConfig, task: &str, example_grad: F) -> TrainingLog
where
    M: Trainable,
    E: Sync,
    F: Fn(&M, &E, &mut [Vec<f64>]) -> f64 + Sync,
{
    let shapes = model.shapes();
    let mut opt = AdamW::new(&shapes, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let per_epoch = examples.len().div_ceil(cfg.batch_size);
    let total = per_epoch * cfg.epochs;
    let mut log = TrainingLog::default();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let step = log.steps.len();
            let m: &M = model;
            let parts: Vec<(f64, Vec<Vec<f64>>)> = batch
                .par_iter()
                .map(|&i| {
                    let mut g = zeros(&shapes);
                    let loss = example_grad(m, &examples[i], &mut g);
                    (loss, g)
                })
                .collect();
            let scale = 1.0 / batch.len() as f64;
            let mut grads = zeros(&shapes);
            let mut loss = 0.0;
            for (l, g) in parts {
                loss += l * scale;
                for (acc, part) in grads.iter_mut().zip(g) {
                    for (a, x) in acc.iter_mut().zip(part) {
                        *a += x * scale;
                    }
                }
            }
            let lr = cfg.learning_rate * lr_multiplier(step, total, cfg.warmup_fraction);
            opt.step(model.blocks_mut(), &grads, lr);
            tracing::debug!(task, epoch, step, lr, loss, "train step");
            log.steps.push(StepLog { step, epoch, lr, loss });
        }
    }
    log
}

fn dense(weights: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    weights
        .chunks_exact(x.len())
        .zip(bias)
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / sum).collect()
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn bce_with_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

fn head_init(rows: usize, cols: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_4ead);
    let scale = 1.0 / (cols as f64).sqrt();
    let mut v: Vec<f64> = uniform(&mut rng, rows * cols, scale).collect();
    v.extend(std::iter::repeat_n(0.0, rows));
    v
}

/// Pooled encoder output followed by a linear layer over `n_classes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceClassifier {
    encoder: EncoderModel,
    n_classes: usize,
    /// `n_classes × hidden` weights then `n_classes` biases.
    head: Vec<f64>,
}

impl SequenceClassifier {
    pub fn new(encoder: EncoderModel, n_classes: usize) -> Self {
        let head = head_init(n_classes, encoder.hidden_dim(), encoder.config().seed);
        Self {
            encoder,
            n_classes,
            head,
        }
    }

    pub fn encoder(&self) -> &EncoderModel {
        &self.encoder
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn split_head(&self) -> (&[f64], &[f64]) {
        self.head.split_at(self.n_classes * self.encoder.hidden_dim())
    }

    fn logits_of(&self, pooled: &[f64]) -> Vec<f64> {
        let (w, b) = self.split_head();
        dense(w, b, pooled)
    }

    pub fn logits(&self, seq: &TaggedSequence) -> Result<Vec<f64>> {
        Ok(self.logits_of(self.encoder.encode(seq)?.as_slice()))
    }

    /// Index of the largest logit; the lowest index wins ties.
    pub fn predict(&self, seq: &TaggedSequence) -> Result<usize> {
        Ok(argmax(&self.logits(seq)?))
    }

    fn example_grad(&self, (emb, label): &(Embedded, usize), grads: &mut [Vec<f64>]) -> f64 {
        let fwd = self.encoder.forward(emb);
        let logits = self.logits_of(&fwd.pooled);
        let mut dlogits = softmax(&logits);
        let loss = -dlogits[*label].max(f64::MIN_POSITIVE).ln();
        dlogits[*label] -= 1.0;

        let h = self.encoder.hidden_dim();
        let (w, _) = self.split_head();
        let mut dpooled = vec![0.0; h];
        let (gw, gb) = grads[1].split_at_mut(self.n_classes * h);
        for c in 0..self.n_classes {
            gb[c] += dlogits[c];
            for j in 0..h {
                gw[c * h + j] += dlogits[c] * fwd.pooled[j];
                dpooled[j] += dlogits[c] * w[c * h + j];
            }
        }
        self.encoder.backward(emb, &fwd, &dpooled, &mut grads[0]);
        loss
    }
}

impl Trainable for SequenceClassifier {
    fn shapes(&self) -> Vec<usize> {
        vec![self.encoder.params().len(), self.head.len()]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.encoder.params_mut(), &mut self.head]
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

/// Cross-encoder: one fused sequence in, a match probability out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScorer {
    encoder: EncoderModel,
    /// `hidden` weights then one bias.
    head: Vec<f64>,
}

impl PairScorer {
    pub fn new(encoder: EncoderModel) -> Self {
        let head = head_init(1, encoder.hidden_dim(), encoder.config().seed);
        Self { encoder, head }
    }

    pub fn encoder(&self) -> &EncoderModel {
        &self.encoder
    }

    pub fn max_len(&self) -> usize {
        self.encoder.config().max_len
    }

    fn logit_of(&self, pooled: &[f64]) -> f64 {
        let (w, b) = self.head.split_at(pooled.len());
        dense(w, b, pooled)[0]
    }

    /// Probability in `[0, 1]` for an already fused sequence.
    pub fn score(&self, fused: &TaggedSequence) -> Result<f64> {
        Ok(sigmoid(self.logit_of(self.encoder.encode(fused)?.as_slice())))
    }

    pub fn fuse(&self, left: &TaggedSequence, right: &TaggedSequence) -> TaggedSequence {
        fuse_pair(left, right, self.max_len())
    }

    pub fn score_pair(&self, left: &TaggedSequence, right: &TaggedSequence) -> Result<f64> {
        self.score(&self.fuse(left, right))
    }

    fn example_grad(&self, (emb, y): &(Embedded, f64), grads: &mut [Vec<f64>]) -> f64 {
        let fwd = self.encoder.forward(emb);
        let z = self.logit_of(&fwd.pooled);
        let dz = sigmoid(z) - y;
        let h = self.encoder.hidden_dim();
        let mut dpooled = vec![0.0; h];
        for j in 0..h {
            grads[1][j] += dz * fwd.pooled[j];
            dpooled[j] = dz * self.head[j];
        }
        grads[1][h] += dz;
        self.encoder.backward(emb, &fwd, &dpooled, &mut grads[0]);
        bce_with_logit(z, *y)
    }
}

impl Trainable for PairScorer {
    fn shapes(&self) -> Vec<usize> {
        vec![self.encoder.params().len(), self.head.len()]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.encoder.params_mut(), &mut self.head]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: TaggedSequence,
    pub positive: TaggedSequence,
    pub negative: TaggedSequence,
}

/// `max(0, d(a, p) - d(a, n) + margin)` with Euclidean `d`.
pub fn triplet_loss(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> f64 {
    (euclidean(anchor, positive) - euclidean(anchor, negative) + margin).max(0.0)
}

/// Two towers with identical initialization: cells go through one, entities
/// through the other.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiEncoder {
    cell: EncoderModel,
    entity: EncoderModel,
}

impl BiEncoder {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        let cell = EncoderModel::new(config)?;
        Ok(Self {
            entity: cell.clone(),
            cell,
        })
    }

    pub fn cell_tower(&self) -> &EncoderModel {
        &self.cell
    }

    pub fn entity_tower(&self) -> &EncoderModel {
        &self.entity
    }

    pub fn cell_tower_mut(&mut self) -> &mut EncoderModel {
        &mut self.cell
    }

    pub fn entity_tower_mut(&mut self) -> &mut EncoderModel {
        &mut self.entity
    }

    pub fn embed_cell(&self, seq: &TaggedSequence) -> Result<PooledVector> {
        self.cell.encode(seq)
    }

    pub fn embed_entity(&self, seq: &TaggedSequence) -> Result<PooledVector> {
        self.entity.encode(seq)
    }

    fn triplet_grad(&self, (a, p, n): &(Embedded, Embedded, Embedded), margin: f64, grads: &mut [Vec<f64>]) -> f64 {
        let fa = self.cell.forward(a);
        let fp = self.entity.forward(p);
        let fn_ = self.entity.forward(n);
        let d_ap = euclidean(&fa.pooled, &fp.pooled);
        let d_an = euclidean(&fa.pooled, &fn_.pooled);
        let loss = d_ap - d_an + margin;
        if loss <= 0.0 {
            return 0.0;
        }
        let h = fa.pooled.len();
        let mut ga = vec![0.0; h];
        let mut gp = vec![0.0; h];
        let mut gn = vec![0.0; h];
        for j in 0..h {
            if d_ap > 0.0 {
                let u = (fa.pooled[j] - fp.pooled[j]) / d_ap;
                ga[j] += u;
                gp[j] -= u;
            }
            if d_an > 0.0 {
                let u = (fa.pooled[j] - fn_.pooled[j]) / d_an;
                ga[j] -= u;
                gn[j] += u;
            }
        }
        let (gc, ge) = grads.split_at_mut(1);
        self.cell.backward(a, &fa, &ga, &mut gc[0]);
        self.entity.backward(p, &fp, &gp, &mut ge[0]);
        self.entity.backward(n, &fn_, &gn, &mut ge[0]);
        loss
    }

    /// Loss of one triplet and its gradient w.r.t. the cell-tower and
    /// entity-tower parameters.
    pub fn triplet_loss_and_grad(&self, t: &Triplet, margin: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let emb = (self.cell.embed(&t.anchor)?, self.entity.embed(&t.positive)?, self.entity.embed(&t.negative)?);
        let mut grads = zeros(&self.shapes());
        let loss = self.triplet_grad(&emb, margin, &mut grads);
        let entity = grads.pop().unwrap();
        let cell = grads.pop().unwrap();
        Ok((loss, cell, entity))
    }

    pub fn triplet_loss(&self, t: &Triplet, margin: f64) -> Result<f64> {
        let a = self.embed_cell(&t.anchor)?;
        let p = self.embed_entity(&t.positive)?;
        let n = self.embed_entity(&t.negative)?;
        Ok(triplet_loss(a.as_slice(), p.as_slice(), n.as_slice(), margin))
    }
}

impl Trainable for BiEncoder {
    fn shapes(&self) -> Vec<usize> {
        vec![self.cell.params().len(), self.entity.params().len()]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.cell.params_mut(), self.entity.params_mut()]
    }
}

pub fn fit_classifier(
    model: &mut SequenceClassifier,
    examples: &[(TaggedSequence, usize)],
    cfg: &TrainingConfig,
) -> Result<TrainingLog> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::invalid("no classification examples"));
    }
    if let Some((_, bad)) = examples.iter().find(|(_, y)| *y >= model.n_classes) {
        return Err(Error::invalid(format!("label {bad} out of range for {} classes", model.n_classes)));
    }
    let first = examples[0].1;
    if examples.iter().all(|(_, y)| *y == first) {
        return Err(Error::invalid("classification data contains a single class"));
    }
    let embedded = examples
        .iter()
        .map(|(s, y)| Ok((model.encoder.embed(s)?, *y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(train_loop(model, &embedded, cfg, "classifier", |m, e, g| m.example_grad(e, g)))
}

/// Positives are labelled 1, negatives 0; sequences must already be fused.
pub fn fit_pairwise(
    model: &mut PairScorer,
    positives: &[TaggedSequence],
    negatives: &[TaggedSequence],
    cfg: &TrainingConfig,
) -> Result<TrainingLog> {
    cfg.validate()?;
    if positives.is_empty() || negatives.is_empty() {
        return Err(Error::invalid("pairwise training needs both positive and negative pairs"));
    }
    let embedded = positives
        .iter()
        .map(|s| (s, 1.0))
        .chain(negatives.iter().map(|s| (s, 0.0)))
        .map(|(s, y)| Ok((model.encoder.embed(s)?, y)))
        .collect::<Result<Vec<_>>>()?;
    Ok(train_loop(model, &embedded, cfg, "pairwise", |m, e, g| m.example_grad(e, g)))
}

pub fn fit_triplet(model: &mut BiEncoder, triplets: &[Triplet], cfg: &TrainingConfig) -> Result<TrainingLog> {
    cfg.validate()?;
    if triplets.is_empty() {
        return Err(Error::invalid("no triplets"));
    }
    let embedded = triplets
        .iter()
        .map(|t| Ok((model.cell.embed(&t.anchor)?, model.entity.embed(&t.positive)?, model.entity.embed(&t.negative)?)))
        .collect::<Result<Vec<_>>>()?;
    let margin = cfg.triplet_margin;
    Ok(train_loop(model, &embedded, cfg, "triplet", |m, e, g| m.triplet_grad(e, margin, g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::SegmentTag;

    fn seq(text: &str, tag: SegmentTag) -> TaggedSequence {
        let toks: Vec<String> = text.split_whitespace().map(str::to_owned).collect();
        let n = toks.len();
        TaggedSequence::new(toks, vec![tag; n]).unwrap()
    }

    fn fast() -> TrainingConfig {
        TrainingConfig {
            epochs: 50,
            batch_size: 4,
            learning_rate: 0.02,
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn schedule_shape() {
        let total = 20;
        let m: Vec<f64> = (0..total).map(|s| lr_multiplier(s, total, 0.1)).collect();
        assert_eq!(m[0], 0.5);
        assert_eq!(m[1], 1.0);
        assert_eq!(m[total - 1], 0.0);
        for w in m[1..].windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert_eq!(lr_multiplier(0, 1, 0.1), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(TrainingConfig::default().validate().is_ok());
        let bad = TrainingConfig {
            warmup_fraction: 1.0,
            ..TrainingConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainingConfig {
            epochs: 0,
            ..TrainingConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn paper_defaults() {
        let c = TrainingConfig::default();
        assert_eq!((c.epochs, c.batch_size), (2, 32));
        assert_eq!(c.learning_rate, 2e-5);
        assert_eq!(c.warmup_fraction, 0.1);
        assert_eq!(c.triplet_margin, 1.0);
        assert_eq!(c.negatives_per_positive, 50);
    }

    #[test]
    fn triplet_loss_with_equal_anchor_and_positive() {
        let a = [0.0, 0.0];
        let n = [0.3, 0.4];
        assert_eq!(triplet_loss(&a, &a, &n, 1.0), 1.0 - 0.5);
        let far = [3.0, 4.0];
        assert_eq!(triplet_loss(&a, &a, &far, 1.0), 0.0);
    }

    #[test]
    fn classifier_errors() {
        let mut m = SequenceClassifier::new(EncoderModel::new(EncoderConfig::default()).unwrap(), 3);
        let cfg = fast();
        assert!(fit_classifier(&mut m, &[], &cfg).is_err());
        let one = vec![(seq("a", SegmentTag::Cell), 1), (seq("b", SegmentTag::Cell), 1)];
        assert!(fit_classifier(&mut m, &one, &cfg).is_err());
        let oob = vec![(seq("a", SegmentTag::Cell), 0), (seq("b", SegmentTag::Cell), 3)];
        assert!(fit_classifier(&mut m, &oob, &cfg).is_err());
    }

    #[test]
    fn pairwise_rejects_empty_side() {
        let mut m = PairScorer::new(EncoderModel::new(EncoderConfig::default()).unwrap());
        assert!(fit_pairwise(&mut m, &[seq("a", SegmentTag::Cell)], &[], &fast()).is_err());
        assert!(fit_pairwise(&mut m, &[], &[seq("a", SegmentTag::Cell)], &fast()).is_err());
    }

    #[test]
    fn untrained_pair_score_is_a_probability() {
        let m = PairScorer::new(EncoderModel::new(EncoderConfig::default()).unwrap());
        let p = m
            .score_pair(&seq("bert base", SegmentTag::Cell), &seq("bert", SegmentTag::Entity))
            .unwrap();
        assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn training_loss_decreases_and_schedule_is_logged() {
        let mut m = SequenceClassifier::new(EncoderModel::new(EncoderConfig::default()).unwrap(), 2);
        let data: Vec<_> = ["alpha one", "beta two", "alpha three", "beta four"]
            .iter()
            .enumerate()
            .map(|(i, t)| (seq(t, SegmentTag::Cell), i % 2))
            .collect();
        let cfg = TrainingConfig {
            epochs: 10,
            batch_size: 2,
            learning_rate: 0.05,
            ..TrainingConfig::default()
        };
        let log = fit_classifier(&mut m, &data, &cfg).unwrap();
        assert_eq!(log.steps.len(), 20);
        let losses = log.epoch_losses();
        assert!(losses.last().unwrap() < losses.first().unwrap());
        for (s, step) in log.steps.iter().enumerate() {
            assert_eq!(step.lr, cfg.learning_rate * lr_multiplier(s, 20, cfg.warmup_fraction));
        }
    }

    /// Central differences over every parameter; relative error of the whole
    /// gradient vector.
    fn fd_error<M: Trainable + Clone>(model: &M, analytic: &[Vec<f64>], loss: impl Fn(&M) -> f64) -> f64 {
        let eps = 1e-6;
        let mut probe = model.clone();
        let (mut diff, mut norm) = (0.0, 0.0);
        for (b, grad) in analytic.iter().enumerate() {
            for i in 0..grad.len() {
                let orig = probe.blocks_mut()[b][i];
                probe.blocks_mut()[b][i] = orig + eps;
                let up = loss(&probe);
                probe.blocks_mut()[b][i] = orig - eps;
                let down = loss(&probe);
                probe.blocks_mut()[b][i] = orig;
                let numeric = (up - down) / (2.0 * eps);
                diff += (numeric - grad[i]).powi(2);
                norm += grad[i].powi(2).max(numeric.powi(2));
            }
        }
        (diff / norm).sqrt()
    }

    fn small() -> EncoderConfig {
        EncoderConfig {
            input_dim: 6,
            hidden_dim: 5,
            seed: 3,
            ..EncoderConfig::default()
        }
    }

    fn mixed() -> TaggedSequence {
        let toks: Vec<String> = ["bert", "base", "x", "bert"].map(String::from).to_vec();
        TaggedSequence::new(toks, vec![SegmentTag::Cell, SegmentTag::Row, SegmentTag::Meta, SegmentTag::Entity]).unwrap()
    }

    #[test]
    fn classifier_gradient_matches_finite_differences() {
        let m = SequenceClassifier::new(EncoderModel::new(small()).unwrap(), 3);
        let ex = (m.encoder.embed(&mixed()).unwrap(), 2);
        let mut g = zeros(&m.shapes());
        m.example_grad(&ex, &mut g);
        let err = fd_error(&m, &g, |m| m.example_grad(&ex, &mut zeros(&m.shapes())));
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn pairwise_gradient_matches_finite_differences() {
        let m = PairScorer::new(EncoderModel::new(small()).unwrap());
        let ex = (m.encoder.embed(&mixed()).unwrap(), 1.0);
        let mut g = zeros(&m.shapes());
        m.example_grad(&ex, &mut g);
        let err = fd_error(&m, &g, |m| m.example_grad(&ex, &mut zeros(&m.shapes())));
        assert!(err < 1e-6, "{err}");
    }
}
