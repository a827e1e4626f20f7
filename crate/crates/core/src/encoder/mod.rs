//! Contextual encoder with a trainable segment-tag embedding layer, mean
//! pooling, and the three task heads trained in [`train`].
//!
//! Every token's input vector is its backend token embedding plus the row of
//! the segment table for the token's [`SegmentTag`]. The backend turns those
//! vectors into contextual token states; the pooled output is their mean.

pub mod checkpoint;
mod stub;
pub mod train;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::{SegmentTag, TaggedSequence};
use crate::error::{Error, Result};

pub use train::{
    fit_classifier, fit_pairwise, fit_triplet, lr_multiplier, triplet_loss, BiEncoder, PairScorer,
    SequenceClassifier, StepLog, TrainingConfig, TrainingLog, Triplet,
};

pub const NUM_TAGS: usize = SegmentTag::ALL.len();

/// Environment variable naming the model cache directory for backends that
/// load pretrained weights.
pub const MODEL_CACHE_ENV: &str = "CELLINK_MODEL_CACHE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    /// Fixed hash-derived token embeddings and one trainable contextual layer.
    Stub,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Stub => "stub",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stub" => Ok(Backend::Stub),
            other => Err(Error::Config(format!("unknown encoder backend `{other}` (available: stub)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub backend: Backend,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
    /// Seeds parameter initialization.
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            backend: Backend::Stub,
            input_dim: 32,
            hidden_dim: 32,
            max_len: crate::context::DEFAULT_MAX_LEN,
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("encoder dimensions and max_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PooledVector(pub Vec<f64>);

impl PooledVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance(&self, other: &PooledVector) -> f64 {
        euclidean(&self.0, &other.0)
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Token vectors looked up once per sequence; reused across epochs.
#[derive(Debug, Clone)]
pub struct Embedded {
    /// `len × input_dim`, row-major.
    base: Vec<f64>,
    /// Fixed lexical-match indicators, `len × NUM_TAGS`.
    matches: Vec<f64>,
    tags: Vec<usize>,
}

impl Embedded {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }
}

pub(crate) struct Forward {
    /// Per-token inputs after adding segment rows, `len × input_dim`.
    inputs: Vec<f64>,
    backend: stub::StubForward,
    pooled: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderModel {
    config: EncoderConfig,
    /// `[segment table (NUM_TAGS × input_dim) | backend parameters]`
    params: Vec<f64>,
}

impl EncoderModel {
    pub fn new(config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.input_dim;
        let mut params = Vec::with_capacity(NUM_TAGS * d + stub::num_params(&config));
        // Segment rows start at the scale of a token embedding so tags are
        // distinguishable before training.
        params.extend(stub::uniform(&mut rng, NUM_TAGS * d, stub::embedding_scale(d)));
        params.extend(stub::init_params(&config, &mut rng));
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn segment_len(&self) -> usize {
        NUM_TAGS * self.config.input_dim
    }

    pub fn segment_table(&self) -> &[f64] {
        &self.params[..self.segment_len()]
    }

    pub fn segment_row(&self, tag: SegmentTag) -> &[f64] {
        let d = self.config.input_dim;
        &self.segment_table()[tag.index() * d..(tag.index() + 1) * d]
    }

    /// Looks up backend token vectors; rejects sequences over `max_len`.
    pub fn embed(&self, seq: &TaggedSequence) -> Result<Embedded> {
        if seq.len() > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: seq.len(),
                max: self.config.max_len,
            });
        }
        let d = self.config.input_dim;
        let mut base = vec![0.0; seq.len() * d];
        for (tok, row) in seq.tokens().iter().zip(base.chunks_exact_mut(d)) {
            stub::token_embedding(tok, row);
        }
        let tags: Vec<usize> = seq.tags().iter().map(|t| t.index()).collect();
        Ok(Embedded {
            matches: stub::match_features(seq.tokens(), &tags),
            base,
            tags,
        })
    }

    pub(crate) fn forward(&self, emb: &Embedded) -> Forward {
        let d = self.config.input_dim;
        let seg = self.segment_table();
        let mut inputs = emb.base.clone();
        for (row, &tag) in inputs.chunks_exact_mut(d).zip(&emb.tags) {
            for (x, s) in row.iter_mut().zip(&seg[tag * d..(tag + 1) * d]) {
                *x += s;
            }
        }
        let (backend, pooled) = stub::forward(&self.config, &self.params[self.segment_len()..], &inputs, &emb.matches);
        Forward {
            inputs,
            backend,
            pooled,
        }
    }

    /// Accumulates into `grad` (same layout as `params`) the gradient of a
    /// loss whose derivative w.r.t. the pooled vector is `grad_pooled`.
    pub(crate) fn backward(&self, emb: &Embedded, fwd: &Forward, grad_pooled: &[f64], grad: &mut [f64]) {
        let d = self.config.input_dim;
        let split = self.segment_len();
        let (grad_seg, grad_backend) = grad.split_at_mut(split);
        let grad_inputs = stub::backward(
            &self.config,
            &self.params[split..],
            &fwd.inputs,
            &emb.matches,
            &fwd.backend,
            grad_pooled,
            grad_backend,
        );
        for (g, &tag) in grad_inputs.chunks_exact(d).zip(&emb.tags) {
            for (acc, x) in grad_seg[tag * d..(tag + 1) * d].iter_mut().zip(g) {
                *acc += x;
            }
        }
    }

    pub fn encode_embedded(&self, emb: &Embedded) -> PooledVector {
        PooledVector(self.forward(emb).pooled)
    }

    pub fn encode(&self, seq: &TaggedSequence) -> Result<PooledVector> {
        Ok(self.encode_embedded(&self.embed(seq)?))
    }

    pub fn encode_batch(&self, seqs: &[TaggedSequence]) -> Result<Vec<PooledVector>> {
        use rayon::prelude::*;
        seqs.par_iter().map(|s| self.encode(s)).collect()
    }
}
