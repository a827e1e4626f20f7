//! Linking numeric-table cells of scientific papers to a knowledge base of
//! methods and datasets, with explicit outKB detection.
//!
//! Stages: cell type classification ([`ctc`]), attributed source matching
//! ([`asm`]), candidate entity retrieval ([`cer`]) and entity disambiguation
//! ([`ed`]), all on top of a segment-tagged [`encoder`].

pub mod asm;
pub mod cer;
pub mod context;
pub mod corpus;
pub mod ctc;
pub mod ed;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod io;
pub mod kb;
pub mod pipeline;
pub mod text;

pub use asm::{SourceCandidate, SourceRanking, SourceScorer};
pub use cer::{CandidateList, CandidateSet, DenseRetriever};
pub use context::{CellContext, SegmentTag, TaggedSequence};
pub use corpus::{CellKey, Corpus, DocumentRecord, TableCellRecord, TableRecord};
pub use ctc::{CellType, CellTypeScorer};
pub use ed::{EntityScorer, GoldLink, LinkDecision, MatchScore};
pub use encoder::{Backend, EncoderConfig, TrainingConfig};
pub use error::{Error, Result};
pub use kb::{Entity, EntityKind, KbStore};
