//! Entity disambiguation: cross-encoder match probabilities and the final
//! link or outKB decision.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cer::{mine_training_cells, resolve};
use crate::context::{fuse_pair, serialize_cell, serialize_entity, CellContext};
use crate::corpus::{CellKey, Corpus};
use crate::encoder::{fit_pairwise, EncoderConfig, EncoderModel, PairScorer, TrainingConfig, TrainingLog};
use crate::error::{Error, Result};
use crate::kb::{Entity, KbStore};

pub const OUTKB: &str = "OUTKB";
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// A gold referent or a link outcome: a KB entity id or outKB. Serialized as
/// the id string or `"OUTKB"`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GoldLink {
    Entity(String),
    OutKb,
}

pub type LinkOutcome = GoldLink;

impl GoldLink {
    pub fn entity_id(&self) -> Option<&str> {
        match self {
            GoldLink::Entity(id) => Some(id),
            GoldLink::OutKb => None,
        }
    }

    pub fn is_outkb(&self) -> bool {
        matches!(self, GoldLink::OutKb)
    }
}

impl fmt::Display for GoldLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.entity_id().unwrap_or(OUTKB))
    }
}

impl Serialize for GoldLink {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for GoldLink {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(if s == OUTKB { GoldLink::OutKb } else { GoldLink::Entity(s) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub cell: CellKey,
    pub entity_id: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkDecision {
    pub cell: CellKey,
    pub outcome: LinkOutcome,
    pub top_prob: f64,
    pub threshold: f64,
}

/// Probability that the cell refers to `entity`.
pub trait EntityScorer: Sync {
    fn match_probability(&self, context: &CellContext, entity: &Entity) -> Result<f64>;
}

impl EntityScorer for PairScorer {
    fn match_probability(&self, context: &CellContext, entity: &Entity) -> Result<f64> {
        self.score_pair(&serialize_cell(context), &serialize_entity(entity))
    }
}

/// One score per candidate, in candidate order. Each score depends only on
/// its own (cell, entity) pair.
pub fn score_candidates<'a>(
    scorer: &dyn EntityScorer,
    cell: &CellKey,
    context: &CellContext,
    candidates: impl Iterator<Item = &'a str>,
    kb: &'a KbStore,
) -> Result<Vec<MatchScore>> {
    resolve(kb, candidates)?
        .into_iter()
        .map(|e| {
            let p = scorer.match_probability(context, e)?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("match probability {p} for {} is outside [0, 1]", e.id)));
            }
            Ok(MatchScore {
                cell: cell.clone(),
                entity_id: e.id.clone(),
                probability: p,
            })
        })
        .collect()
}

/// Highest-probability entity, ties to the smaller id, or `None` when empty.
pub fn top_candidate(scores: &[MatchScore]) -> Option<&MatchScore> {
    scores.iter().reduce(|best, s| {
        if s.probability > best.probability || (s.probability == best.probability && s.entity_id < best.entity_id) {
            s
        } else {
            best
        }
    })
}

/// Links to the top candidate unless its probability is below `threshold`
/// or there are no candidates.
pub fn decide(cell: CellKey, scores: &[MatchScore], threshold: f64) -> LinkDecision {
    let (outcome, top_prob) = match top_candidate(scores) {
        Some(top) if top.probability >= threshold => (GoldLink::Entity(top.entity_id.clone()), top.probability),
        Some(top) => (GoldLink::OutKb, top.probability),
        None => (GoldLink::OutKb, 0.0),
    };
    LinkDecision {
        cell,
        outcome,
        top_prob,
        threshold,
    }
}

/// Positives pair each inKB training cell with its gold entity; negatives
/// are the BM25F hard negatives shared with dense-retrieval training.
pub fn train_ed(
    corpus: &Corpus,
    train_topics: &[String],
    kb: &KbStore,
    encoder: &EncoderConfig,
    training: &TrainingConfig,
    n_sentences: usize,
) -> Result<(PairScorer, TrainingLog)> {
    let mined = mine_training_cells(corpus, train_topics, kb, n_sentences, training.negatives_per_positive)?;
    if mined.is_empty() {
        return Err(Error::invalid("no inKB training cells for entity disambiguation"));
    }
    let max = encoder.max_len;
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for m in &mined {
        let cell = serialize_cell(&m.context);
        pos.push(fuse_pair(&cell, &serialize_entity(m.gold), max));
        neg.extend(m.negatives.iter().map(|n| fuse_pair(&cell, &serialize_entity(n), max)));
    }
    tracing::info!(positives = pos.len(), negatives = neg.len(), "disambiguation training set");
    let mut model = PairScorer::new(EncoderModel::new(encoder.clone())?);
    let log = fit_pairwise(&mut model, &pos, &neg, training)?;
    Ok((model, log))
}
