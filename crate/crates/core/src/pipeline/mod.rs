//! Stage orchestration over a work directory:
//!
//! ```text
//! <work>/kb/                    normalized knowledge base
//! <work>/corpus/                normalized corpus + validation.json
//! <work>/models/<stage>-<hash>/ checkpoint + training_log.jsonl
//! <work>/predictions/<split>-<hash>/
//! <work>/reports/
//! ```
//!
//! Model and prediction directories are keyed by a digest of every input
//! that shaped them (configuration, split, upstream data and checkpoints), so
//! artifacts from incompatible settings never mix.

pub mod config;
pub mod predict;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::asm::train_asm;
use crate::cer::{train_dr, RECALL_CUTOFFS};
use crate::corpus::{load_corpus, make_folds, validate_corpus, Corpus, FoldSplit, ValidationReport};
use crate::ctc::train_ctc;
use crate::ed::train_ed;
use crate::encoder::checkpoint;
use crate::encoder::{BiEncoder, PairScorer, SequenceClassifier, TrainingLog};
use crate::error::{Error, Result};
use crate::eval::{build_report, recall_csv, render_text, sweep_csv, sweep_thresholds, EvalInputs, MetricsReport, SweepRow};
use crate::io::{write_json, write_jsonl, write_string};
use crate::kb::convert::convert_pwc_dump;
use crate::kb::{ingest_kb, KbCounts, KbStore, ENTITIES_FILE, PAPERS_FILE, RELATIONS_FILE};

pub use config::PipelineConfig;
pub use predict::{predict_cells, PredictSettings, Predictions, Scorers};

pub const VALIDATION_FILE: &str = "validation.json";
pub const TRAINING_LOG_FILE: &str = "training_log.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ctc,
    Asm,
    Dr,
    Ed,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Ctc, Stage::Asm, Stage::Dr, Stage::Ed];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ctc => "ctc",
            Stage::Asm => "asm",
            Stage::Dr => "dr",
            Stage::Ed => "ed",
        }
    }

    fn needs_kb(self) -> bool {
        matches!(self, Stage::Dr | Stage::Ed)
    }
}

/// Error unless `path` exists.
pub fn require(path: &Path) -> Result<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()))
    }
}

/// Training and prediction topics.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Split {
    /// Every topic is both trained on and predicted.
    All(Vec<String>),
    Fold(FoldSplit),
}

impl Split {
    pub fn name(&self) -> String {
        match self {
            Split::All(_) => "all".into(),
            Split::Fold(f) => format!("fold-{}", f.test_topic),
        }
    }

    pub fn train_topics(&self) -> &[String] {
        match self {
            Split::All(t) => t,
            Split::Fold(f) => &f.train_topics,
        }
    }

    pub fn predict_topics(&self) -> Vec<String> {
        match self {
            Split::All(t) => t.clone(),
            Split::Fold(f) => vec![f.test_topic.clone()],
        }
    }
}

fn short_digest(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn digest_files(paths: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    for p in paths {
        let bytes = std::fs::read(require(p)?).map_err(|e| Error::io(p, e))?;
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(short_digest(&h.finalize()))
}

/// A configured pipeline bound to its work directory.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn work_dir(&self) -> &Path {
        &self.config.paths.work_dir
    }

    pub fn kb_dir(&self) -> PathBuf {
        self.work_dir().join("kb")
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.work_dir().join("corpus")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.work_dir().join("reports")
    }

    fn kb_files(&self) -> Vec<PathBuf> {
        [ENTITIES_FILE, PAPERS_FILE, RELATIONS_FILE].map(|f| self.kb_dir().join(f)).to_vec()
    }

    fn corpus_files(&self) -> Vec<PathBuf> {
        use crate::corpus::{CELLS_FILE, DOCUMENTS_FILE, TABLES_FILE};
        [DOCUMENTS_FILE, TABLES_FILE, CELLS_FILE].map(|f| self.corpus_dir().join(f)).to_vec()
    }

    fn source_dir(&self, p: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        match p {
            Some(p) if p.is_dir() => Ok(p.clone()),
            Some(p) => Err(Error::Config(format!("{what} directory {} does not exist", p.display()))),
            None => Err(Error::Config(format!("paths.{what} is not set"))),
        }
    }

    /// Loads the KB dump from `paths.kb`, or converts a Papers with Code
    /// style dump from `pwc_dump`, and writes the normalized store.
    pub fn ingest_kb(&self, pwc_dump: Option<&Path>) -> Result<KbCounts> {
        let dest = self.kb_dir();
        let store = match pwc_dump {
            Some(src) => {
                if !src.is_dir() {
                    return Err(Error::Config(format!("dump directory {} does not exist", src.display())));
                }
                let staging = self.work_dir().join("kb-convert");
                convert_pwc_dump(src, &staging)?;
                let store = ingest_kb(&staging, self.config.bm25f)?;
                std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
                store
            }
            None => ingest_kb(&self.source_dir(&self.config.paths.kb, "kb")?, self.config.bm25f)?,
        };
        store.write_dump(&dest)?;
        Ok(store.counts())
    }

    pub fn ingest_corpus(&self) -> Result<ValidationReport> {
        let corpus = load_corpus(&self.source_dir(&self.config.paths.corpus, "corpus")?)?;
        let report = validate_corpus(&corpus);
        for w in &report.warnings {
            tracing::warn!("{w}");
        }
        corpus.write(&self.corpus_dir())?;
        write_json(&self.corpus_dir().join(VALIDATION_FILE), &report)?;
        Ok(report)
    }

    pub fn load_kb(&self) -> Result<KbStore> {
        for f in self.kb_files() {
            require(&f)?;
        }
        ingest_kb(&self.kb_dir(), self.config.bm25f)
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        for f in self.corpus_files() {
            require(&f)?;
        }
        load_corpus(&self.corpus_dir())
    }

    pub fn split(&self, corpus: &Corpus) -> Result<Split> {
        match &self.config.fold {
            None => Ok(Split::All(corpus.topics())),
            Some(test) => make_folds(corpus, &self.config.validation_topic)
                .map_err(|e| Error::Config(e.to_string()))?
                .into_iter()
                .find(|f| &f.test_topic == test)
                .map(Split::Fold)
                .ok_or_else(|| Error::Config(format!("`{test}` is not a test topic of any fold"))),
        }
    }

    fn stage_hash(&self, stage: Stage, split: &Split) -> Result<String> {
        #[derive(Serialize)]
        struct Key<'a> {
            stage: Stage,
            encoder: crate::encoder::EncoderConfig,
            training: crate::encoder::TrainingConfig,
            n_sentences: usize,
            bm25f: Option<crate::kb::Bm25fParams>,
            train_topics: &'a [String],
            corpus: String,
            kb: Option<String>,
        }
        let key = Key {
            stage,
            encoder: self.config.encoder_config(),
            training: self.config.training(stage),
            n_sentences: self.config.n_sentences,
            bm25f: stage.needs_kb().then_some(self.config.bm25f),
            train_topics: split.train_topics(),
            corpus: digest_files(&self.corpus_files())?,
            kb: stage.needs_kb().then(|| digest_files(&self.kb_files())).transpose()?,
        };
        Ok(short_digest(&serde_json::to_vec(&key)?))
    }

    pub fn model_dir(&self, stage: Stage, split: &Split) -> Result<PathBuf> {
        let hash = self.stage_hash(stage, split)?;
        Ok(self.work_dir().join("models").join(format!("{}-{}", stage.name(), hash)))
    }

    /// Trains one stage on the configured split and writes its checkpoint.
    pub fn train(&self, stage: Stage) -> Result<PathBuf> {
        let corpus = self.load_corpus()?;
        let split = self.split(&corpus)?;
        let topics = split.train_topics();
        let enc = self.config.encoder_config();
        let training = self.config.training(stage);
        let n = self.config.n_sentences;
        let dir = self.model_dir(stage, &split)?;
        tracing::info!(stage = stage.name(), split = %split.name(), dir = %dir.display(), "training");
        let log: TrainingLog = match stage {
            Stage::Ctc => {
                let (m, log) = train_ctc(&corpus, topics, &enc, &training, n)?;
                checkpoint::save(&dir, stage.name(), &enc, &m)?;
                log
            }
            Stage::Asm => {
                let (m, log) = train_asm(&corpus, topics, &enc, &training, n)?;
                checkpoint::save(&dir, stage.name(), &enc, &m)?;
                log
            }
            Stage::Dr => {
                let kb = self.load_kb()?;
                let (m, log) = train_dr(&corpus, topics, &kb, &enc, &training, n)?;
                checkpoint::save(&dir, stage.name(), &enc, &m)?;
                log
            }
            Stage::Ed => {
                let kb = self.load_kb()?;
                let (m, log) = train_ed(&corpus, topics, &kb, &enc, &training, n)?;
                checkpoint::save(&dir, stage.name(), &enc, &m)?;
                log
            }
        };
        write_jsonl(&dir.join(TRAINING_LOG_FILE), &log.steps)?;
        Ok(dir)
    }

    fn settings(&self) -> PredictSettings {
        PredictSettings {
            n_sentences: self.config.n_sentences,
            k: self.config.k,
            threshold: self.config.threshold,
            interleave_first: self.config.interleave_first,
        }
    }

    fn predictions_dir(&self, split: &Split) -> Result<PathBuf> {
        #[derive(Serialize)]
        struct Key {
            models: Vec<String>,
            n_sentences: usize,
            k: usize,
            threshold: f64,
            interleave_first: crate::cer::CandidateSource,
            kb: String,
        }
        let key = Key {
            models: Stage::ALL
                .iter()
                .map(|s| self.stage_hash(*s, split))
                .collect::<Result<_>>()?,
            n_sentences: self.config.n_sentences,
            k: self.config.k,
            threshold: self.config.threshold,
            interleave_first: self.config.interleave_first,
            kb: digest_files(&self.kb_files())?,
        };
        let hash = short_digest(&serde_json::to_vec(&key)?);
        Ok(self.work_dir().join("predictions").join(format!("{}-{hash}", split.name())))
    }

    /// Runs all four trained stages over the split's prediction topics.
    pub fn predict(&self) -> Result<PathBuf> {
        let corpus = self.load_corpus()?;
        let kb = self.load_kb()?;
        let split = self.split(&corpus)?;
        let ctc: SequenceClassifier = checkpoint::load(&self.model_dir(Stage::Ctc, &split)?, Stage::Ctc.name())?;
        let asm: PairScorer = checkpoint::load(&self.model_dir(Stage::Asm, &split)?, Stage::Asm.name())?;
        let dr: BiEncoder = checkpoint::load(&self.model_dir(Stage::Dr, &split)?, Stage::Dr.name())?;
        let ed: PairScorer = checkpoint::load(&self.model_dir(Stage::Ed, &split)?, Stage::Ed.name())?;
        let scorers = Scorers {
            ctc: &ctc,
            asm: &asm,
            dr: &dr,
            ed: &ed,
        };
        let topics = split.predict_topics();
        let cells: Vec<_> = corpus.cells_in(&topics).collect();
        let out = predict_cells(scorers, &corpus, &kb, &cells, &self.settings())?;
        let dir = self.predictions_dir(&split)?;
        out.write(&dir)?;
        tracing::info!(cells = cells.len(), links = out.links.len(), dir = %dir.display(), "predictions written");
        Ok(dir)
    }

    /// The configured fold, or every fold with predictions under the current
    /// configuration, or the all-topics split.
    fn evaluation_splits(&self, corpus: &Corpus) -> Result<Vec<Split>> {
        if self.config.fold.is_some() {
            return Ok(vec![self.split(corpus)?]);
        }
        let mut found = Vec::new();
        if let Ok(folds) = make_folds(corpus, &self.config.validation_topic) {
            for f in folds {
                let s = Split::Fold(f);
                if self.predictions_dir(&s)?.is_dir() {
                    found.push(s);
                }
            }
        }
        if found.is_empty() {
            found.push(Split::All(corpus.topics()));
        }
        Ok(found)
    }

    fn eval_inputs(&self, corpus: &Corpus) -> Result<EvalInputs> {
        let mut inputs = EvalInputs::default();
        for split in self.evaluation_splits(corpus)? {
            let dir = self.predictions_dir(&split)?;
            let p = Predictions::read(require(&dir)?)?;
            let topics = split.predict_topics();
            for c in corpus.cells_in(&topics) {
                let key = c.key();
                inputs.topics.insert(key.clone(), corpus.topic_of(c).unwrap_or_default().to_owned());
                if let Some(t) = c.gold_cell_type {
                    inputs.gold_types.insert(key.clone(), t);
                }
                if let Some(l) = &c.gold_link {
                    inputs.gold_links.insert(key.clone(), l.clone());
                }
                if let Some(s) = &c.gold_attributed_sources {
                    inputs.gold_sources.insert(key, s.clone());
                }
            }
            for x in &p.ctc {
                inputs.predicted_types.insert(x.key(), x.predicted_type);
            }
            for r in &p.rankings {
                inputs.rankings.insert(r.cell.clone(), r.to_ranking()?);
            }
            for l in p.links.iter().cloned() {
                inputs.decisions.insert(l.cell, l.outcome);
            }
            for set in &p.candidates {
                inputs
                    .candidates
                    .insert(set.cell.clone(), set.ids().map(str::to_owned).collect());
            }
            inputs.scores.extend(p.scores_by_cell());
        }
        Ok(inputs)
    }

    /// Writes `report.txt`, `report.json`, `recall_at_k.csv`, `sweep.csv`.
    pub fn evaluate(&self) -> Result<MetricsReport> {
        let corpus = self.load_corpus()?;
        let inputs = self.eval_inputs(&corpus)?;
        let report = build_report(&inputs, &RECALL_CUTOFFS, &self.config.sweep_grid)?;
        let dir = self.reports_dir();
        write_string(&dir.join("report.txt"), &render_text(&report))?;
        write_json(&dir.join("report.json"), &report)?;
        write_string(&dir.join("recall_at_k.csv"), &recall_csv(&report))?;
        write_string(&dir.join("sweep.csv"), &sweep_csv(&report.sweep))?;
        Ok(report)
    }

    /// Threshold sweep from stored match scores; no model is run.
    pub fn sweep(&self) -> Result<Vec<SweepRow>> {
        let corpus = self.load_corpus()?;
        let inputs = self.eval_inputs(&corpus)?;
        let rows = sweep_thresholds(&inputs.scores, &inputs.gold_links, &self.config.sweep_grid);
        let dir = self.reports_dir();
        write_string(&dir.join("sweep.csv"), &sweep_csv(&rows))?;
        write_json(&dir.join("sweep.json"), &rows)?;
        Ok(rows)
    }
}
