use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cer::{CandidateSource, DEFAULT_K};
use crate::context::{DEFAULT_MAX_LEN, DEFAULT_N_SENTENCES};
use crate::corpus::DEFAULT_VALIDATION_TOPIC;
use crate::ed::DEFAULT_THRESHOLD;
use crate::encoder::{Backend, EncoderConfig, TrainingConfig};
use crate::error::{Error, Result};
use crate::eval::default_threshold_grid;
use crate::io::read_string;
use crate::kb::Bm25fParams;

use super::Stage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory with `entities.jsonl`, `papers.jsonl`, `relations.jsonl`.
    pub kb: Option<PathBuf>,
    /// Directory with `documents.jsonl`, `tables.jsonl`, `cells.jsonl`.
    pub corpus: Option<PathBuf>,
    pub work_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            kb: None,
            corpus: None,
            work_dir: PathBuf::from("work"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderDims {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub max_len: usize,
}

impl Default for EncoderDims {
    fn default() -> Self {
        Self {
            input_dim: 32,
            hidden_dim: 32,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    /// Seeds every stage: parameter init, shuffling and augmentation.
    pub seed: u64,
    pub backend: Backend,
    pub n_sentences: usize,
    /// Candidate set size.
    pub k: usize,
    /// outKB threshold on the top match probability.
    pub threshold: f64,
    pub validation_topic: String,
    /// Test topic of a cross-domain fold. Unset: train and predict on every topic.
    pub fold: Option<String>,
    /// Which candidate list leads the interleaving.
    pub interleave_first: CandidateSource,
    pub encoder: EncoderDims,
    pub bm25f: Bm25fParams,
    pub ctc: TrainingConfig,
    pub asm: TrainingConfig,
    pub dr: TrainingConfig,
    pub ed: TrainingConfig,
    pub sweep_grid: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            seed: 42,
            backend: Backend::Stub,
            n_sentences: DEFAULT_N_SENTENCES,
            k: DEFAULT_K,
            threshold: DEFAULT_THRESHOLD,
            validation_topic: DEFAULT_VALIDATION_TOPIC.to_owned(),
            fold: None,
            interleave_first: CandidateSource::Asr,
            encoder: EncoderDims::default(),
            bm25f: Bm25fParams::default(),
            ctc: TrainingConfig::default(),
            asm: TrainingConfig::default(),
            dr: TrainingConfig::default(),
            ed: TrainingConfig::default(),
            sweep_grid: default_threshold_grid(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Relative paths in the file resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::Config(format!("config file {} does not exist", path.display())));
        }
        let mut cfg = Self::from_toml(&read_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.paths.kb.as_mut().map(rebase);
        cfg.paths.corpus.as_mut().map(rebase);
        rebase(&mut cfg.paths.work_dir);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if self.sweep_grid.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("sweep_grid values must be finite".into()));
        }
        self.bm25f.validate().map_err(Error::Config)?;
        self.encoder_config().validate()?;
        for s in Stage::ALL {
            self.training(s)
                .validate()
                .map_err(|e| Error::Config(format!("[{}] {e}", s.name())))?;
        }
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            backend: self.backend,
            input_dim: self.encoder.input_dim,
            hidden_dim: self.encoder.hidden_dim,
            max_len: self.encoder.max_len,
            seed: self.seed,
        }
    }

    /// Stage training settings with the global seed applied.
    pub fn training(&self, stage: Stage) -> TrainingConfig {
        let t = match stage {
            Stage::Ctc => &self.ctc,
            Stage::Asm => &self.asm,
            Stage::Dr => &self.dr,
            Stage::Ed => &self.ed,
        };
        TrainingConfig {
            seed: self.seed,
            ..t.clone()
        }
    }
}
