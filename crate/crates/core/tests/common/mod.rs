//! Fixtures and brute-force reference implementations shared by the
//! integration targets.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, HashSet};

use cellink_core::asm::SourceCandidate;
use cellink_core::cer::{CandidateEntryFlags, CandidateList};
use cellink_core::corpus::{CellKey, Corpus, DocumentRecord, ReferenceEntry, TableCellRecord, TableRecord};
use cellink_core::ctc::CellType;
use cellink_core::ed::GoldLink;
use cellink_core::kb::{Bm25fParams, Entity, EntityKind, KbPaper, KbStore, PaperEntityRelation};
use cellink_core::text::tokenize;

pub fn key(doc: &str, row: usize, col: usize) -> CellKey {
    CellKey {
        document_id: doc.into(),
        table_id: "t1".into(),
        row,
        col,
    }
}

pub fn entity(id: &str, kind: EntityKind, abbr: &str, full: &str, desc: &str) -> Entity {
    Entity {
        id: id.into(),
        kind,
        abbreviation: abbr.into(),
        full_name: full.into(),
        description: desc.into(),
    }
}

pub fn reference(index: u32, author: &str, title: &str, kb_paper: Option<&str>) -> ReferenceEntry {
    ReferenceEntry {
        index,
        first_author_last_name: author.into(),
        year: Some(2019),
        title: title.into(),
        abstract_text: String::new(),
        matched_kb_paper_id: kb_paper.map(str::to_owned),
    }
}

pub fn document(id: &str, topic: &str, sentences: &[&str], references: Vec<ReferenceEntry>) -> DocumentRecord {
    DocumentRecord {
        id: id.into(),
        topic_fold: topic.into(),
        title: format!("Paper {id}"),
        abstract_text: "We report results on several benchmarks.".into(),
        matched_kb_paper_id: None,
        sentences: sentences.iter().map(|s| s.to_string()).collect(),
        references,
        tables: vec![],
    }
}

pub fn table(doc: &str, grid: &[Vec<&str>]) -> TableRecord {
    TableRecord {
        document_id: doc.into(),
        id: "t1".into(),
        grid: grid.iter().map(|r| r.iter().map(|s| s.to_string()).collect()).collect(),
        caption: String::new(),
    }
}

pub fn cell(doc: &str, row: usize, col: usize) -> TableCellRecord {
    TableCellRecord {
        document_id: doc.into(),
        table_id: "t1".into(),
        row,
        col,
        raw_text: String::new(),
        gold_cell_type: None,
        gold_attributed_sources: None,
        gold_link: None,
    }
}

/// Fifteen cells, three per type; each row of the table holds one type.
pub fn ctc_task() -> Corpus {
    let grid = vec![
        vec!["0.91", "73.2", "params"],
        vec!["SQuAD", "MNIST", "ImageNet"],
        vec!["BERT", "LSTM", "ResNet"],
        vec!["Accuracy", "BLEU", "Recall"],
        vec!["SQuAD (EM)", "MNIST (err)", "ImageNet (top-1)"],
    ];
    let types = [
        CellType::Other,
        CellType::Dataset,
        CellType::Method,
        CellType::Metric,
        CellType::DatasetAndMetric,
    ];
    let doc = document(
        "d1",
        "topic-a",
        &[
            "We fine-tune BERT and an LSTM baseline.",
            "ResNet is evaluated on ImageNet and MNIST.",
            "We report Accuracy, BLEU and Recall.",
            "SQuAD is a reading comprehension benchmark.",
        ],
        vec![],
    );
    let cells = (0..5)
        .flat_map(|r| {
            (0..3).map(move |c| TableCellRecord {
                gold_cell_type: Some(types[r]),
                ..cell("d1", r, c)
            })
        })
        .collect();
    Corpus::from_records(vec![doc], vec![table("d1", &grid)], cells).unwrap()
}

/// Twelve cells in one table; each cell's attributed source is the
/// reference whose title shares the cell's name.
pub fn asm_task() -> Corpus {
    let names = ["Alpha", "Bravo", "Charlie", "Delta"];
    let refs: Vec<_> = names
        .iter()
        .enumerate()
        .map(|(i, n)| reference(i as u32 + 1, "Smith", &format!("{n} networks for vision"), None))
        .collect();
    let mut doc = document("d1", "topic-a", &["We compare several networks."], refs);
    doc.title = "Echo: a new network".into();
    let grid = vec![
        vec!["Alpha-S", "Bravo-S", "Charlie-S", "Delta-S"],
        vec!["Alpha-L", "Bravo-L", "Charlie-L", "Echo-S"],
        vec!["Delta-L", "Echo-L", "Alpha-XL", "Bravo-XL"],
    ];
    let mut cells = Vec::new();
    for (r, row) in grid.iter().enumerate() {
        for (c, text) in row.iter().enumerate() {
            let name = text.split('-').next().unwrap();
            let src = match names.iter().position(|n| *n == name) {
                Some(i) => SourceCandidate::Reference(i as u32 + 1),
                None => SourceCandidate::SelfDoc,
            };
            cells.push(TableCellRecord {
                gold_cell_type: Some(CellType::Method),
                gold_attributed_sources: Some(BTreeSet::from([src])),
                ..cell("d1", r, c)
            });
        }
    }
    Corpus::from_records(vec![doc], vec![table("d1", &grid)], cells).unwrap()
}

const METHOD_NAMES: [(&str, &str); 10] = [
    ("BERT", "Bidirectional Encoder Representations"),
    ("GPT", "Generative Pretrained Transformer"),
    ("LSTM", "Long Short Term Memory"),
    ("CNN", "Convolutional Neural Network"),
    ("GAN", "Generative Adversarial Network"),
    ("VAE", "Variational Autoencoder"),
    ("SVM", "Support Vector Machine"),
    ("GRU", "Gated Recurrent Unit"),
    ("MLP", "Multilayer Perceptron"),
    ("RNN", "Recurrent Neural Network"),
];

const EXTRA_METHODS: [(&str, &str); 10] = [
    ("XLNet", "Generalized Autoregressive Pretraining"),
    ("ELMo", "Embeddings from Language Models"),
    ("ViT", "Vision Transformer"),
    ("UNet", "Convolutional Network for Segmentation"),
    ("DQN", "Deep Q Network"),
    ("PPO", "Proximal Policy Optimization"),
    ("TCN", "Temporal Convolutional Network"),
    ("BiLSTM", "Bidirectional Long Short Term Memory"),
    ("DCGAN", "Deep Convolutional Generative Adversarial Network"),
    ("ResNet", "Residual Network"),
];

/// Twenty method entities and ten inKB cells naming the first ten, one
/// single-cell table per document. Every description shares the word
/// `network` with every cell, so BM25F mining finds negatives for each cell.
pub fn linking_task() -> (Corpus, KbStore) {
    let entities: Vec<Entity> = METHOD_NAMES
        .iter()
        .chain(&EXTRA_METHODS)
        .enumerate()
        .map(|(i, (abbr, full))| entity(&format!("m{i:02}"), EntityKind::Method, abbr, full, "a neural network model"))
        .collect();
    let kb = KbStore::from_records(entities, Vec::<KbPaper>::new(), Vec::<PaperEntityRelation>::new(), Bm25fParams::default())
        .unwrap();
    let mut docs = Vec::new();
    let mut tables = Vec::new();
    let mut cells = Vec::new();
    for (i, (abbr, _)) in METHOD_NAMES.iter().enumerate() {
        let id = format!("d{i:02}");
        docs.push(document(&id, "topic-a", &["Results are reported below."], vec![]));
        tables.push(table(&id, &[vec![&format!("{abbr} network")]]));
        cells.push(TableCellRecord {
            gold_cell_type: Some(CellType::Method),
            gold_link: Some(GoldLink::Entity(format!("m{i:02}"))),
            ..cell(&id, 0, 0)
        });
    }
    let corpus = Corpus::from_records(docs, tables, cells).unwrap();
    (corpus, kb)
}

/// Straight-line BM25 over tokenized documents: for every distinct query
/// term present in a document, `idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avg))`.
pub fn naive_bm25(docs: &[&str], query: &str, k1: f64, b: f64) -> Vec<f64> {
    let toks: Vec<Vec<String>> = docs.iter().map(|d| tokenize(d)).collect();
    let n = docs.len() as f64;
    let avg = toks.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut terms = tokenize(query);
    let mut seen = HashSet::new();
    terms.retain(|t| seen.insert(t.clone()));
    toks.iter()
        .map(|d| {
            let mut s = 0.0;
            for t in &terms {
                let tf = d.iter().filter(|x| *x == t).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let df = toks.iter().filter(|d| d.contains(t)).count() as f64;
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                let norm = if avg > 0.0 { 1.0 - b + b * d.len() as f64 / avg } else { 1.0 };
                s += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
            s
        })
        .collect()
}

/// Straight-line BM25F: per-field length-normalized term frequencies are
/// weighted and summed before one saturation.
pub fn naive_bm25f(entities: &[Entity], query: &str, p: &Bm25fParams) -> HashMap<String, f64> {
    let fields = |e: &Entity| {
        [
            (tokenize(&e.abbreviation), p.abbreviation_weight),
            (tokenize(&e.full_name), p.full_name_weight),
            (tokenize(&e.description), p.description_weight),
        ]
    };
    let all: Vec<_> = entities.iter().map(fields).collect();
    let n = entities.len() as f64;
    let avg: Vec<f64> = (0..3)
        .map(|f| all.iter().map(|fs| fs[f].0.len()).sum::<usize>() as f64 / n)
        .collect();
    let mut terms = tokenize(query);
    let mut seen = HashSet::new();
    terms.retain(|t| seen.insert(t.clone()));
    let mut out = HashMap::new();
    for (e, fs) in entities.iter().zip(&all) {
        let mut score = 0.0;
        for t in &terms {
            let df = all.iter().filter(|fs| fs.iter().any(|(toks, _)| toks.contains(t))).count() as f64;
            if df == 0.0 {
                continue;
            }
            let mut pseudo = 0.0;
            for (f, (toks, w)) in fs.iter().enumerate() {
                let tf = toks.iter().filter(|x| *x == t).count() as f64;
                if tf > 0.0 {
                    let norm = if avg[f] > 0.0 { 1.0 - p.b + p.b * toks.len() as f64 / avg[f] } else { 1.0 };
                    pseudo += w * tf / norm;
                }
            }
            if pseudo > 0.0 {
                let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
                score += idf * pseudo * (p.k1 + 1.0) / (p.k1 + pseudo);
            }
        }
        if score > 0.0 {
            out.insert(e.id.clone(), score);
        }
    }
    out
}

/// Reference interleaver: build the alternating stream explicitly, then
/// dedupe and cut.
pub fn brute_interleave(dr: &[String], asr: &[String], k: usize) -> Vec<(String, bool, bool)> {
    let mut stream = Vec::new();
    for i in 0..dr.len().max(asr.len()) {
        if let Some(a) = asr.get(i) {
            stream.push(a.clone());
        }
        if let Some(d) = dr.get(i) {
            stream.push(d.clone());
        }
    }
    let mut out: Vec<String> = Vec::new();
    for id in stream {
        if !out.contains(&id) {
            out.push(id);
        }
    }
    out.truncate(k);
    out.into_iter()
        .map(|id| {
            let (d, a) = (dr.contains(&id), asr.contains(&id));
            (id, d, a)
        })
        .collect()
}

pub fn flags(v: &[CandidateEntryFlags]) -> Vec<(String, bool, bool)> {
    v.iter().map(|c| (c.entity_id.clone(), c.from_dr, c.from_asr)).collect()
}

pub fn list(source: cellink_core::cer::CandidateSource, ids: &[String]) -> CandidateList {
    CandidateList::from_ids(source, ids.iter().cloned())
}
