//! Candidate entity retrieval: dense nearest neighbours, entities of the
//! ranked attributed sources, and their interleaving.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::asm::{SourceCandidate, SourceRanking};
use crate::context::{build_contexts, serialize_cell, serialize_entity, CellContext};
use crate::corpus::{CellKey, Corpus, DocumentRecord, TableCellRecord};
use crate::ctc::CellType;
use crate::ed::GoldLink;
use crate::encoder::{euclidean, fit_triplet, BiEncoder, EncoderConfig, PooledVector, TrainingConfig, TrainingLog, Triplet};
use crate::error::{Error, Result};
use crate::kb::{Entity, EntityKind, KbStore};

pub const DEFAULT_K: usize = 50;
pub const RECALL_CUTOFFS: [usize; 6] = [1, 5, 10, 20, 50, 100];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CandidateSource {
    Dr,
    Asr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateEntry {
    pub entity_id: String,
    /// 1-based.
    pub rank: usize,
    /// Euclidean distance for DR; absent for ASR.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateList {
    pub source: CandidateSource,
    pub entries: Vec<CandidateEntry>,
}

impl CandidateList {
    /// Ranks are assigned from list order.
    pub fn new(source: CandidateSource, items: impl IntoIterator<Item = (String, Option<f64>)>) -> Self {
        Self {
            source,
            entries: items
                .into_iter()
                .enumerate()
                .map(|(i, (entity_id, score))| CandidateEntry {
                    entity_id,
                    rank: i + 1,
                    score,
                })
                .collect(),
        }
    }

    pub fn from_ids<S: Into<String>>(source: CandidateSource, ids: impl IntoIterator<Item = S>) -> Self {
        Self::new(source, ids.into_iter().map(|id| (id.into(), None)))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.entity_id.as_str())
    }

    /// Rank of each id's first occurrence.
    fn ranks(&self) -> HashMap<&str, usize> {
        let mut out = HashMap::with_capacity(self.entries.len());
        for e in &self.entries {
            out.entry(e.entity_id.as_str()).or_insert(e.rank);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateEntryFlags {
    pub entity_id: String,
    pub from_dr: bool,
    pub from_asr: bool,
    pub dr_rank: Option<usize>,
    pub asr_rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub cell: CellKey,
    #[serde(rename = "K")]
    pub k: usize,
    pub candidates: Vec<CandidateEntryFlags>,
}

impl CandidateSet {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.entity_id.as_str())
    }
}

/// Alternates the two lists starting with `first`, skipping ids already
/// emitted, until `k` ids are out or both lists are exhausted. Provenance
/// flags record membership in each full list.
pub fn interleave_with(dr: &CandidateList, asr: &CandidateList, k: usize, first: CandidateSource) -> Vec<CandidateEntryFlags> {
    let (a, b) = match first {
        CandidateSource::Asr => (asr, dr),
        CandidateSource::Dr => (dr, asr),
    };
    let mut seen = HashSet::new();
    let mut order: Vec<&str> = Vec::new();
    let longest = a.entries.len().max(b.entries.len());
    'outer: for i in 0..longest {
        for list in [a, b] {
            if order.len() >= k {
                break 'outer;
            }
            if let Some(e) = list.entries.get(i) {
                if seen.insert(e.entity_id.as_str()) {
                    order.push(&e.entity_id);
                }
            }
        }
    }
    let (dr_ranks, asr_ranks) = (dr.ranks(), asr.ranks());
    order
        .into_iter()
        .map(|id| {
            let dr_rank = dr_ranks.get(id).copied();
            let asr_rank = asr_ranks.get(id).copied();
            CandidateEntryFlags {
                entity_id: id.to_owned(),
                from_dr: dr_rank.is_some(),
                from_asr: asr_rank.is_some(),
                dr_rank,
                asr_rank,
            }
        })
        .collect()
}

/// ASR-first interleaving.
pub fn interleave(dr: &CandidateList, asr: &CandidateList, k: usize) -> Vec<CandidateEntryFlags> {
    interleave_with(dr, asr, k, CandidateSource::Asr)
}

/// KB paper behind a source, if it was matched.
pub fn source_kb_paper(document: &DocumentRecord, source: SourceCandidate) -> Option<&str> {
    match source {
        SourceCandidate::SelfDoc => document.matched_kb_paper_id.as_deref(),
        SourceCandidate::Reference(i) => document.reference(i)?.matched_kb_paper_id.as_deref(),
    }
}

/// Entities of the ranked sources' KB papers, in ranking order then
/// ascending entity id, restricted to the kind implied by `cell_type`.
/// Unmatched sources contribute nothing; repeats keep the first occurrence.
pub fn asr_candidates(ranking: &SourceRanking, document: &DocumentRecord, kb: &KbStore, cell_type: CellType) -> CandidateList {
    let Some(kind) = cell_type.entity_kind() else {
        return CandidateList::from_ids::<String>(CandidateSource::Asr, []);
    };
    let mut seen = HashSet::new();
    let mut ids = Vec::new();
    for source in ranking.sources() {
        let Some(paper) = source_kb_paper(document, source) else {
            continue;
        };
        let Ok(entities) = kb.entities_for_paper(paper, Some(kind)) else {
            tracing::debug!(paper, "attributed source not in the knowledge base");
            continue;
        };
        for e in entities {
            if seen.insert(e.id.as_str()) {
                ids.push(e.id.clone());
            }
        }
    }
    CandidateList::from_ids(CandidateSource::Asr, ids)
}

pub trait DenseRetriever: Sync {
    fn embed_cell(&self, context: &CellContext) -> Result<PooledVector>;
    fn embed_entity(&self, entity: &Entity) -> Result<PooledVector>;
}

impl DenseRetriever for BiEncoder {
    fn embed_cell(&self, context: &CellContext) -> Result<PooledVector> {
        let max = self.cell_tower().config().max_len;
        BiEncoder::embed_cell(self, &serialize_cell(context).truncated(max))
    }

    fn embed_entity(&self, entity: &Entity) -> Result<PooledVector> {
        let max = self.entity_tower().config().max_len;
        BiEncoder::embed_entity(self, &serialize_entity(entity).truncated(max))
    }
}

/// Precomputed entity-tower vectors for every KB entity, in KB (id) order.
#[derive(Debug, Clone)]
pub struct EntityIndex {
    ids: Vec<String>,
    kinds: Vec<EntityKind>,
    vectors: Vec<PooledVector>,
}

impl EntityIndex {
    pub fn build(retriever: &dyn DenseRetriever, kb: &KbStore) -> Result<Self> {
        use rayon::prelude::*;
        let vectors = kb
            .entities()
            .par_iter()
            .map(|e| retriever.embed_entity(e))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            ids: kb.entities().iter().map(|e| e.id.clone()).collect(),
            kinds: kb.entities().iter().map(|e| e.kind).collect(),
            vectors,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// `k` nearest entities of `kind` (all kinds if `None`) to `query`;
    /// distance ties go to the smaller id.
    pub fn nearest(&self, query: &PooledVector, kind: Option<EntityKind>, k: usize) -> CandidateList {
        let mut hits: Vec<(f64, &str)> = self
            .ids
            .iter()
            .zip(&self.kinds)
            .zip(&self.vectors)
            .filter(|((_, k), _)| kind.is_none_or(|want| **k == want))
            .map(|((id, _), v)| (euclidean(query.as_slice(), v.as_slice()), id.as_str()))
            .collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        hits.truncate(k);
        CandidateList::new(
            CandidateSource::Dr,
            hits.into_iter().map(|(d, id)| (id.to_owned(), Some(d))),
        )
    }
}

pub fn dr_candidates(
    retriever: &dyn DenseRetriever,
    context: &CellContext,
    index: &EntityIndex,
    kind: Option<EntityKind>,
    k: usize,
) -> Result<CandidateList> {
    Ok(index.nearest(&retriever.embed_cell(context)?, kind, k))
}

/// Up to `n` entities most BM25F-similar to `query`, excluding `gold`.
pub fn mine_negatives<'a>(kb: &'a KbStore, query: &str, gold: &str, kind: Option<EntityKind>, n: usize) -> Vec<&'a Entity> {
    kb.search_bm25f(query, kind, n + 1)
        .into_iter()
        .map(|(e, _)| e)
        .filter(|e| e.id != gold)
        .take(n)
        .collect()
}

/// An inKB training cell with its gold entity and mined hard negatives.
#[derive(Debug, Clone)]
pub struct MinedCell<'a> {
    pub cell: &'a TableCellRecord,
    pub context: CellContext,
    pub gold: &'a Entity,
    pub negatives: Vec<&'a Entity>,
}

/// Training cells whose gold entity is in the KB, with negatives of the gold
/// entity's kind mined by querying the KB with the cell text.
pub fn mine_training_cells<'a>(
    corpus: &'a Corpus,
    train_topics: &[String],
    kb: &'a KbStore,
    n_sentences: usize,
    negatives_per_positive: usize,
) -> Result<Vec<MinedCell<'a>>> {
    let mut cells = Vec::new();
    let mut golds = Vec::new();
    for c in corpus.cells_in(train_topics) {
        if let Some(GoldLink::Entity(id)) = &c.gold_link {
            match kb.entity(id) {
                Some(e) => {
                    cells.push(c);
                    golds.push(e);
                }
                None => tracing::warn!(cell = %c.key(), entity = %id, "gold entity missing from the knowledge base"),
            }
        }
    }
    let contexts = build_contexts(corpus, &cells, n_sentences)?;
    Ok(cells
        .into_iter()
        .zip(golds)
        .zip(contexts)
        .map(|((cell, gold), context)| MinedCell {
            negatives: mine_negatives(kb, &context.cell_content, &gold.id, Some(gold.kind), negatives_per_positive),
            cell,
            context,
            gold,
        })
        .collect())
}

pub fn train_dr(
    corpus: &Corpus,
    train_topics: &[String],
    kb: &KbStore,
    encoder: &EncoderConfig,
    training: &TrainingConfig,
    n_sentences: usize,
) -> Result<(BiEncoder, TrainingLog)> {
    let mined = mine_training_cells(corpus, train_topics, kb, n_sentences, training.negatives_per_positive)?;
    if mined.is_empty() {
        return Err(Error::invalid("no inKB training cells for dense retrieval"));
    }
    let max = encoder.max_len;
    let triplets: Vec<Triplet> = mined
        .iter()
        .flat_map(|m| {
            let anchor = serialize_cell(&m.context).truncated(max);
            let positive = serialize_entity(m.gold).truncated(max);
            m.negatives.iter().map(move |n| Triplet {
                anchor: anchor.clone(),
                positive: positive.clone(),
                negative: serialize_entity(n).truncated(max),
            })
        })
        .collect();
    tracing::info!(cells = mined.len(), triplets = triplets.len(), "dense retrieval training set");
    if triplets.is_empty() {
        return Err(Error::invalid("no BM25F negatives found for any inKB training cell"));
    }
    let mut model = BiEncoder::new(encoder.clone())?;
    let log = fit_triplet(&mut model, &triplets, training)?;
    Ok((model, log))
}

/// Fraction of inKB gold cells whose entity is within the first `k`
/// candidates. A gold cell without a candidate list counts as a miss; no
/// inKB cells gives 0.
pub fn recall_at_k(candidates: &BTreeMap<CellKey, Vec<String>>, gold: &BTreeMap<CellKey, GoldLink>, k: usize) -> f64 {
    let (mut hits, mut n) = (0usize, 0usize);
    for (cell, link) in gold {
        let GoldLink::Entity(id) = link else {
            continue;
        };
        n += 1;
        if candidates.get(cell).is_some_and(|c| c.iter().take(k).any(|x| x == id)) {
            hits += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        hits as f64 / n as f64
    }
}

/// Lookup from entity id to KB entity for a candidate set.
pub(crate) fn resolve<'a>(kb: &'a KbStore, ids: impl Iterator<Item = &'a str>) -> Result<Vec<&'a Entity>> {
    let mut cache: HashMap<&str, &Entity> = HashMap::new();
    ids.map(|id| {
        if let Some(e) = cache.get(id) {
            return Ok(*e);
        }
        let e = kb.entity(id).ok_or_else(|| Error::NotFound {
            kind: "entity",
            id: id.to_owned(),
        })?;
        cache.insert(id, e);
        Ok(e)
    })
    .collect()
}
