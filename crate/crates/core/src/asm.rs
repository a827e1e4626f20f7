//! Attributed source matching: which cited paper, or the document itself, a
//! cell's concept comes from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::context::{build_contexts, serialize_cell, serialize_paper, serialize_self, CellContext, TaggedSequence};
use crate::corpus::{CellKey, Corpus, DocumentRecord, TableCellRecord};
use crate::encoder::{fit_pairwise, EncoderConfig, EncoderModel, PairScorer, TrainingConfig, TrainingLog};
use crate::error::{Error, Result};

/// `SelfDoc` sorts before every reference; references sort by index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceCandidate {
    SelfDoc,
    Reference(u32),
}

impl SourceCandidate {
    pub fn kind(self) -> &'static str {
        match self {
            SourceCandidate::SelfDoc => "SELF",
            SourceCandidate::Reference(_) => "REFERENCE",
        }
    }

    pub fn reference_index(self) -> Option<u32> {
        match self {
            SourceCandidate::SelfDoc => None,
            SourceCandidate::Reference(i) => Some(i),
        }
    }
}

impl fmt::Display for SourceCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceCandidate::SelfDoc => f.write_str("SELF"),
            SourceCandidate::Reference(i) => write!(f, "{i}"),
        }
    }
}

/// Serialized as `"SELF"` or the bare reference index.
impl Serialize for SourceCandidate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SourceCandidate::SelfDoc => s.serialize_str("SELF"),
            SourceCandidate::Reference(i) => s.serialize_u32(*i),
        }
    }
}

impl<'de> Deserialize<'de> for SourceCandidate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = SourceCandidate;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("\"SELF\" or a positive reference index")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Self::Value, E> {
                if v == "SELF" {
                    Ok(SourceCandidate::SelfDoc)
                } else {
                    v.parse::<u64>().map_err(|_| E::invalid_value(de::Unexpected::Str(v), &self)).and_then(|i| self.visit_u64(i))
                }
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Self::Value, E> {
                match u32::try_from(v) {
                    Ok(i) if i >= 1 => Ok(SourceCandidate::Reference(i)),
                    _ => Err(E::invalid_value(de::Unexpected::Unsigned(v), &self)),
                }
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Self::Value, E> {
                match u64::try_from(v) {
                    Ok(u) => self.visit_u64(u),
                    Err(_) => Err(E::invalid_value(de::Unexpected::Signed(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

/// SELF followed by every reference, in list order.
pub fn candidates(document: &DocumentRecord) -> Vec<SourceCandidate> {
    std::iter::once(SourceCandidate::SelfDoc)
        .chain(document.references.iter().map(|r| SourceCandidate::Reference(r.index)))
        .collect()
}

pub fn source_sequence(document: &DocumentRecord, source: SourceCandidate) -> Result<TaggedSequence> {
    match source {
        SourceCandidate::SelfDoc => Ok(serialize_self(document)),
        SourceCandidate::Reference(i) => document.reference(i).map(serialize_paper).ok_or_else(|| Error::NotFound {
            kind: "reference",
            id: format!("{}#{i}", document.id),
        }),
    }
}

/// Probability that `source` is an attributed source of the cell.
pub trait SourceScorer: Sync {
    fn source_probability(&self, context: &CellContext, document: &DocumentRecord, source: SourceCandidate) -> Result<f64>;
}

impl SourceScorer for PairScorer {
    fn source_probability(&self, context: &CellContext, document: &DocumentRecord, source: SourceCandidate) -> Result<f64> {
        self.score_pair(&serialize_cell(context), &source_sequence(document, source)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceRanking {
    /// Non-increasing probability; ties keep `SourceCandidate` order.
    pub entries: Vec<(SourceCandidate, f64)>,
}

impl SourceRanking {
    pub fn from_scores(mut entries: Vec<(SourceCandidate, f64)>) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        Self { entries }
    }

    pub fn sources(&self) -> impl Iterator<Item = SourceCandidate> + '_ {
        self.entries.iter().map(|(s, _)| *s)
    }
}

pub fn rank_sources(scorer: &dyn SourceScorer, context: &CellContext, document: &DocumentRecord) -> Result<SourceRanking> {
    let scored = candidates(document)
        .into_iter()
        .map(|s| Ok((s, scorer.source_probability(context, document, s)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SourceRanking::from_scores(scored))
}

/// Fused training pairs. Gold sources are positives; every other candidate
/// of the document is a negative, so a cell with no gold source contributes
/// only negatives.
pub fn asm_pairs(
    corpus: &Corpus,
    cells: &[&TableCellRecord],
    n_sentences: usize,
    max_len: usize,
) -> Result<(Vec<TaggedSequence>, Vec<TaggedSequence>)> {
    let contexts = build_contexts(corpus, cells, n_sentences)?;
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for (cell, ctx) in cells.iter().zip(&contexts) {
        let Some(gold) = &cell.gold_attributed_sources else {
            continue;
        };
        let (doc, _) = corpus.locate(cell)?;
        let cands = candidates(doc);
        if cands.is_empty() {
            tracing::warn!(document = %doc.id, "no source candidates; skipped");
            continue;
        }
        let cell_seq = serialize_cell(ctx);
        for s in cands {
            let fused = crate::context::fuse_pair(&cell_seq, &source_sequence(doc, s)?, max_len);
            if gold.contains(&s) {
                pos.push(fused);
            } else {
                neg.push(fused);
            }
        }
    }
    Ok((pos, neg))
}

pub fn train_asm(
    corpus: &Corpus,
    train_topics: &[String],
    encoder: &EncoderConfig,
    training: &TrainingConfig,
    n_sentences: usize,
) -> Result<(PairScorer, TrainingLog)> {
    let cells: Vec<&TableCellRecord> = corpus
        .cells_in(train_topics)
        .filter(|c| c.gold_attributed_sources.is_some())
        .collect();
    if cells.is_empty() {
        return Err(Error::invalid("no training cells with attributed-source annotations"));
    }
    let (pos, neg) = asm_pairs(corpus, &cells, n_sentences, encoder.max_len)?;
    tracing::info!(cells = cells.len(), positives = pos.len(), negatives = neg.len(), "source matching training set");
    let mut model = PairScorer::new(EncoderModel::new(encoder.clone())?);
    let log = fit_pairwise(&mut model, &pos, &neg, training)?;
    Ok((model, log))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSource {
    pub kind: String,
    pub reference_index: Option<u32>,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRecord {
    pub cell: CellKey,
    pub ranking: Vec<RankedSource>,
}

impl RankingRecord {
    pub fn new(cell: CellKey, ranking: &SourceRanking) -> Self {
        Self {
            cell,
            ranking: ranking
                .entries
                .iter()
                .map(|(s, p)| RankedSource {
                    kind: s.kind().to_owned(),
                    reference_index: s.reference_index(),
                    prob: *p,
                })
                .collect(),
        }
    }

    pub fn to_ranking(&self) -> Result<SourceRanking> {
        let entries = self
            .ranking
            .iter()
            .map(|r| match (r.kind.as_str(), r.reference_index) {
                ("SELF", None) => Ok((SourceCandidate::SelfDoc, r.prob)),
                ("REFERENCE", Some(i)) => Ok((SourceCandidate::Reference(i), r.prob)),
                _ => Err(Error::invalid(format!("malformed ranking entry for {}", self.cell))),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SourceRanking { entries })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AsmMetrics {
    /// Over cells with at least one gold source.
    pub mrr: f64,
    /// Binary decisions on (cell, source) pairs at probability 0.5.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub cells: usize,
}

pub const ASM_DECISION_THRESHOLD: f64 = 0.5;

pub(crate) fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

/// Rankings missing for a gold cell are an error.
pub fn eval_asm(
    rankings: &BTreeMap<CellKey, SourceRanking>,
    gold: &BTreeMap<CellKey, BTreeSet<SourceCandidate>>,
) -> Result<AsmMetrics> {
    let (mut rr_sum, mut rr_n) = (0.0, 0usize);
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (cell, sources) in gold {
        let ranking = rankings.get(cell).ok_or_else(|| Error::NotFound {
            kind: "source ranking",
            id: cell.to_string(),
        })?;
        if !sources.is_empty() {
            rr_n += 1;
            if let Some(pos) = ranking.entries.iter().position(|(s, _)| sources.contains(s)) {
                rr_sum += 1.0 / (pos + 1) as f64;
            }
        }
        for (s, p) in &ranking.entries {
            match (*p >= ASM_DECISION_THRESHOLD, sources.contains(s)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
    }
    let (precision, recall, f1) = prf(tp, fp, fn_);
    Ok(AsmMetrics {
        mrr: if rr_n == 0 { 0.0 } else { rr_sum / rr_n as f64 },
        precision,
        recall,
        f1,
        cells: gold.len(),
    })
}
