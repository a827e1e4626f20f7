use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::asm::{rank_sources, RankingRecord, SourceScorer};
use crate::cer::{asr_candidates, dr_candidates, interleave_with, CandidateSet, CandidateSource, DenseRetriever, EntityIndex};
use crate::context::build_contexts;
use crate::corpus::{CellKey, Corpus, TableCellRecord};
use crate::ctc::{classify, CellTypeScorer, CtcPrediction};
use crate::ed::{decide, score_candidates, EntityScorer, LinkDecision, MatchScore};
use crate::error::Result;
use crate::io::{read_jsonl, write_jsonl};
use crate::kb::KbStore;

pub const CTC_FILE: &str = "ctc.jsonl";
pub const RANKINGS_FILE: &str = "rankings.jsonl";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const LINKS_FILE: &str = "links.jsonl";

/// The four trained components, or any stand-ins implementing the traits.
#[derive(Clone, Copy)]
pub struct Scorers<'a> {
    pub ctc: &'a dyn CellTypeScorer,
    pub asm: &'a dyn SourceScorer,
    pub dr: &'a dyn DenseRetriever,
    pub ed: &'a dyn EntityScorer,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictSettings {
    pub n_sentences: usize,
    pub k: usize,
    pub threshold: f64,
    pub interleave_first: CandidateSource,
}

/// Per-stage outputs, each in input cell order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub ctc: Vec<CtcPrediction>,
    pub rankings: Vec<RankingRecord>,
    pub candidates: Vec<CandidateSet>,
    pub scores: Vec<MatchScore>,
    pub links: Vec<LinkDecision>,
}

struct CellOutput {
    ctc: CtcPrediction,
    ranking: RankingRecord,
    linked: Option<(CandidateSet, Vec<MatchScore>, LinkDecision)>,
}

/// classify, rank sources, then for entity-typed cells retrieve, interleave,
/// score and decide. Cells typed `other` or `metric` get no link.
pub fn predict_cells(
    scorers: Scorers<'_>,
    corpus: &Corpus,
    kb: &KbStore,
    cells: &[&TableCellRecord],
    settings: &PredictSettings,
) -> Result<Predictions> {
    let index = EntityIndex::build(scorers.dr, kb)?;
    let contexts = build_contexts(corpus, cells, settings.n_sentences)?;
    let outputs = cells
        .par_iter()
        .zip(&contexts)
        .map(|(cell, ctx)| -> Result<CellOutput> {
            let key = cell.key();
            let (ty, type_scores) = classify(scorers.ctc, ctx)?;
            let (doc, _) = corpus.locate(cell)?;
            let ranking = rank_sources(scorers.asm, ctx, doc)?;
            let linked = match ty.entity_kind() {
                None => None,
                Some(kind) => {
                    let dr = dr_candidates(scorers.dr, ctx, &index, Some(kind), settings.k)?;
                    let asr = asr_candidates(&ranking, doc, kb, ty);
                    let set = CandidateSet {
                        cell: key.clone(),
                        k: settings.k,
                        candidates: interleave_with(&dr, &asr, settings.k, settings.interleave_first),
                    };
                    let scores = score_candidates(scorers.ed, &key, ctx, set.ids(), kb)?;
                    let decision = decide(key.clone(), &scores, settings.threshold);
                    Some((set, scores, decision))
                }
            };
            Ok(CellOutput {
                ctc: CtcPrediction::new(&key, ty, type_scores),
                ranking: RankingRecord::new(key, &ranking),
                linked,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut p = Predictions::default();
    for o in outputs {
        p.ctc.push(o.ctc);
        p.rankings.push(o.ranking);
        if let Some((set, scores, decision)) = o.linked {
            p.candidates.push(set);
            p.scores.extend(scores);
            p.links.push(decision);
        }
    }
    Ok(p)
}

impl Predictions {
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_jsonl(&dir.join(CTC_FILE), &self.ctc)?;
        write_jsonl(&dir.join(RANKINGS_FILE), &self.rankings)?;
        write_jsonl(&dir.join(CANDIDATES_FILE), &self.candidates)?;
        write_jsonl(&dir.join(SCORES_FILE), &self.scores)?;
        write_jsonl(&dir.join(LINKS_FILE), &self.links)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        for f in [CTC_FILE, RANKINGS_FILE, CANDIDATES_FILE, SCORES_FILE, LINKS_FILE] {
            super::require(&dir.join(f))?;
        }
        Ok(Self {
            ctc: read_jsonl(&dir.join(CTC_FILE))?,
            rankings: read_jsonl(&dir.join(RANKINGS_FILE))?,
            candidates: read_jsonl(&dir.join(CANDIDATES_FILE))?,
            scores: read_jsonl(&dir.join(SCORES_FILE))?,
            links: read_jsonl(&dir.join(LINKS_FILE))?,
        })
    }

    /// Match scores grouped by cell.
    pub fn scores_by_cell(&self) -> BTreeMap<CellKey, Vec<MatchScore>> {
        let mut m: BTreeMap<CellKey, Vec<MatchScore>> = BTreeMap::new();
        for s in &self.scores {
            m.entry(s.cell.clone()).or_default().push(s.clone());
        }
        m
    }
}
