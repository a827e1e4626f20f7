//! Cell type classification.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::context::{build_contexts, serialize_cell, CellContext};
use crate::corpus::{CellKey, Corpus, FoldSplit, TableCellRecord};
use crate::encoder::{fit_classifier, EncoderConfig, EncoderModel, SequenceClassifier, TrainingConfig, TrainingLog};
use crate::error::{Error, Result};
use crate::kb::EntityKind;

/// Declaration order is the tie-break order of [`argmax_cell_type`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    Other,
    Dataset,
    Method,
    Metric,
    DatasetAndMetric,
}

pub const NUM_CELL_TYPES: usize = 5;

impl CellType {
    pub const ALL: [CellType; NUM_CELL_TYPES] = [
        CellType::Other,
        CellType::Dataset,
        CellType::Method,
        CellType::Metric,
        CellType::DatasetAndMetric,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            CellType::Other => "other",
            CellType::Dataset => "dataset",
            CellType::Method => "method",
            CellType::Metric => "metric",
            CellType::DatasetAndMetric => "dataset_and_metric",
        }
    }

    /// Cells of these types go on to entity linking.
    pub fn is_linkable(self) -> bool {
        self.entity_kind().is_some()
    }

    /// KB kind to retrieve for this type. Metrics have no ontology, so a
    /// dataset-and-metric cell looks for datasets.
    pub fn entity_kind(self) -> Option<EntityKind> {
        match self {
            CellType::Dataset | CellType::DatasetAndMetric => Some(EntityKind::Dataset),
            CellType::Method => Some(EntityKind::Method),
            CellType::Other | CellType::Metric => None,
        }
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Anything producing one score per [`CellType`], in `CellType::ALL` order.
pub trait CellTypeScorer: Sync {
    fn cell_type_scores(&self, context: &CellContext) -> Result<[f64; NUM_CELL_TYPES]>;
}

impl CellTypeScorer for SequenceClassifier {
    fn cell_type_scores(&self, context: &CellContext) -> Result<[f64; NUM_CELL_TYPES]> {
        let seq = serialize_cell(context).truncated(self.encoder().config().max_len);
        let logits = self.logits(&seq)?;
        logits
            .try_into()
            .map_err(|v: Vec<f64>| Error::invalid(format!("classifier has {} outputs, expected 5", v.len())))
    }
}

/// Highest score wins; ties go to the earlier type in `CellType::ALL`.
pub fn argmax_cell_type(scores: &[f64; NUM_CELL_TYPES]) -> CellType {
    CellType::ALL[crate::encoder::train::argmax(scores)]
}

pub fn classify(scorer: &dyn CellTypeScorer, context: &CellContext) -> Result<(CellType, [f64; NUM_CELL_TYPES])> {
    let scores = scorer.cell_type_scores(context)?;
    Ok((argmax_cell_type(&scores), scores))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtcExample {
    pub cell: CellKey,
    pub context: CellContext,
    pub label: CellType,
}

/// Raises every non-empty positive class to the size of the largest positive
/// class. Copies cycle through the class's examples in order and differ from
/// their source only in the order of `context_sentences`. `other` is never
/// resampled. Originals come first, unchanged.
pub fn oversample(examples: &[CtcExample], rng: &mut ChaCha8Rng) -> Vec<CtcExample> {
    let mut by_class: BTreeMap<CellType, Vec<&CtcExample>> = BTreeMap::new();
    for e in examples {
        by_class.entry(e.label).or_default().push(e);
    }
    let target = by_class
        .iter()
        .filter(|(t, _)| **t != CellType::Other)
        .map(|(_, v)| v.len())
        .max()
        .unwrap_or(0);
    let mut out = examples.to_vec();
    for (ty, members) in &by_class {
        if *ty == CellType::Other {
            continue;
        }
        for i in 0..target - members.len() {
            let mut copy = members[i % members.len()].clone();
            copy.context.context_sentences.shuffle(rng);
            out.push(copy);
        }
    }
    out
}

/// Stream id separating the augmentation draws from the training shuffle.
const OVERSAMPLE_STREAM: u64 = 1;

/// Examples from `cells`, each required to carry a gold type.
pub fn ctc_examples(corpus: &Corpus, cells: &[&TableCellRecord], n_sentences: usize) -> Result<Vec<CtcExample>> {
    let contexts = build_contexts(corpus, cells, n_sentences)?;
    cells
        .iter()
        .zip(contexts)
        .map(|(c, context)| {
            let label = c.gold_cell_type.ok_or_else(|| Error::Schema {
                document_id: c.document_id.clone(),
                field: "gold_cell_type",
                message: format!("training cell {} has no gold cell type", c.key()),
            })?;
            Ok(CtcExample {
                cell: c.key(),
                context,
                label,
            })
        })
        .collect()
}

pub fn train_ctc(
    corpus: &Corpus,
    train_topics: &[String],
    encoder: &EncoderConfig,
    training: &TrainingConfig,
    n_sentences: usize,
) -> Result<(SequenceClassifier, TrainingLog)> {
    let cells: Vec<&TableCellRecord> = corpus.cells_in(train_topics).collect();
    if cells.is_empty() {
        return Err(Error::invalid("no training cells for cell type classification"));
    }
    let examples = ctc_examples(corpus, &cells, n_sentences)?;
    let mut rng = ChaCha8Rng::seed_from_u64(training.seed);
    rng.set_stream(OVERSAMPLE_STREAM);
    let augmented = oversample(&examples, &mut rng);
    tracing::info!(original = examples.len(), augmented = augmented.len(), "cell type training set");

    let data: Vec<_> = augmented
        .iter()
        .map(|e| (serialize_cell(&e.context).truncated(encoder.max_len), e.label.index()))
        .collect();
    let mut model = SequenceClassifier::new(EncoderModel::new(encoder.clone())?, NUM_CELL_TYPES);
    let log = fit_classifier(&mut model, &data, training)?;
    Ok((model, log))
}

/// Training topics of a fold.
pub fn train_ctc_fold(
    corpus: &Corpus,
    fold: &FoldSplit,
    encoder: &EncoderConfig,
    training: &TrainingConfig,
    n_sentences: usize,
) -> Result<(SequenceClassifier, TrainingLog)> {
    train_ctc(corpus, &fold.train_topics, encoder, training, n_sentences)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtcPrediction {
    pub document_id: String,
    pub table_id: String,
    pub row: usize,
    pub col: usize,
    pub predicted_type: CellType,
    pub scores: Vec<f64>,
}

impl CtcPrediction {
    pub fn new(cell: &CellKey, predicted_type: CellType, scores: [f64; NUM_CELL_TYPES]) -> Self {
        Self {
            document_id: cell.document_id.clone(),
            table_id: cell.table_id.clone(),
            row: cell.row,
            col: cell.col,
            predicted_type,
            scores: scores.to_vec(),
        }
    }

    pub fn key(&self) -> CellKey {
        CellKey {
            document_id: self.document_id.clone(),
            table_id: self.table_id.clone(),
            row: self.row,
            col: self.col,
        }
    }
}
