//! Annotated corpus: documents, their references and tables, labelled cells,
//! and cross-domain fold splits.

mod validate;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::asm::SourceCandidate;
use crate::ctc::CellType;
use crate::ed::GoldLink;
use crate::error::{Error, Result};
use crate::io::{read_jsonl, write_jsonl};

pub use validate::{validate_corpus, AsmDistribution, FoldCounts, ValidationReport};

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const TABLES_FILE: &str = "tables.jsonl";
pub const CELLS_FILE: &str = "cells.jsonl";

pub const DEFAULT_VALIDATION_TOPIC: &str = "image_classification";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceEntry {
    /// 1-based position in the reference section.
    pub index: u32,
    #[serde(default)]
    pub first_author_last_name: String,
    #[serde(default)]
    pub year: Option<i32>,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(default)]
    pub matched_kb_paper_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentRecord {
    pub id: String,
    pub topic_fold: String,
    #[serde(default)]
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    /// KB paper for the document itself, when the KB has it.
    #[serde(default)]
    pub matched_kb_paper_id: Option<String>,
    /// Full text including captions and section headers, in document order.
    pub sentences: Vec<String>,
    #[serde(default)]
    pub references: Vec<ReferenceEntry>,
    #[serde(skip)]
    pub tables: Vec<TableRecord>,
}

impl DocumentRecord {
    pub fn table(&self, table_id: &str) -> Option<&TableRecord> {
        self.tables.iter().find(|t| t.id == table_id)
    }

    pub fn reference(&self, index: u32) -> Option<&ReferenceEntry> {
        self.references.iter().find(|r| r.index == index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRecord {
    pub document_id: String,
    pub id: String,
    /// Row-major raw cell strings.
    pub grid: Vec<Vec<String>>,
    #[serde(default)]
    pub caption: String,
}

impl TableRecord {
    pub fn rows(&self) -> usize {
        self.grid.len()
    }

    pub fn cols(&self) -> usize {
        self.grid.first().map_or(0, Vec::len)
    }

    pub fn cell(&self, row: usize, col: usize) -> Option<&str> {
        self.grid.get(row).and_then(|r| r.get(col)).map(String::as_str)
    }
}

/// Identifies one cell across the corpus. Serialized as the `cell` object of
/// every prediction file.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub document_id: String,
    pub table_id: String,
    pub row: usize,
    pub col: usize,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}[{},{}]", self.document_id, self.table_id, self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableCellRecord {
    pub document_id: String,
    pub table_id: String,
    pub row: usize,
    pub col: usize,
    #[serde(default)]
    pub raw_text: String,
    #[serde(default)]
    pub gold_cell_type: Option<CellType>,
    /// `None` means not annotated; `Some(empty)` means no attributed source.
    #[serde(default)]
    pub gold_attributed_sources: Option<BTreeSet<SourceCandidate>>,
    #[serde(default)]
    pub gold_link: Option<GoldLink>,
}

impl TableCellRecord {
    pub fn key(&self) -> CellKey {
        CellKey {
            document_id: self.document_id.clone(),
            table_id: self.table_id.clone(),
            row: self.row,
            col: self.col,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    documents: Vec<DocumentRecord>,
    doc_pos: HashMap<String, usize>,
    cells: Vec<TableCellRecord>,
}

fn schema(document_id: &str, field: &'static str, message: impl Into<String>) -> Error {
    Error::Schema {
        document_id: document_id.to_owned(),
        field,
        message: message.into(),
    }
}

impl Corpus {
    /// Assembles and checks referential integrity. `raw_text` left empty on a
    /// cell record is filled from the grid.
    pub fn from_records(
        documents: Vec<DocumentRecord>,
        tables: Vec<TableRecord>,
        cells: Vec<TableCellRecord>,
    ) -> Result<Self> {
        let mut documents = documents;
        let mut doc_pos = HashMap::with_capacity(documents.len());
        for (i, d) in documents.iter_mut().enumerate() {
            d.tables.clear();
            if doc_pos.insert(d.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "document",
                    id: d.id.clone(),
                });
            }
            if d.topic_fold.trim().is_empty() {
                return Err(schema(&d.id, "topic_fold", "empty topic"));
            }
            if d.sentences.is_empty() {
                return Err(schema(&d.id, "sentences", "document has no sentences"));
            }
            let mut seen = HashSet::new();
            for r in &d.references {
                if r.index == 0 {
                    return Err(schema(&d.id, "references", "reference index must be >= 1"));
                }
                if !seen.insert(r.index) {
                    return Err(schema(&d.id, "references", format!("duplicate reference index {}", r.index)));
                }
            }
        }

        for t in tables {
            let Some(&di) = doc_pos.get(&t.document_id) else {
                return Err(schema(&t.document_id, "tables", format!("table `{}` for unknown document", t.id)));
            };
            let rows = t.grid.len();
            let cols = t.grid.first().map_or(0, Vec::len);
            if rows == 0 || cols == 0 {
                return Err(schema(&t.document_id, "grid", format!("table `{}` is empty", t.id)));
            }
            if t.grid.iter().any(|r| r.len() != cols) {
                return Err(schema(&t.document_id, "grid", format!("table `{}` is not rectangular", t.id)));
            }
            let doc = &mut documents[di];
            if doc.tables.iter().any(|x| x.id == t.id) {
                return Err(schema(&t.document_id, "tables", format!("duplicate table id `{}`", t.id)));
            }
            doc.tables.push(t);
        }

        let mut cells = cells;
        let mut keys = HashSet::with_capacity(cells.len());
        for c in &mut cells {
            let Some(&di) = doc_pos.get(&c.document_id) else {
                return Err(schema(&c.document_id, "cells", "cell for unknown document"));
            };
            let doc = &documents[di];
            let Some(table) = doc.table(&c.table_id) else {
                return Err(schema(&doc.id, "table_id", format!("unknown table `{}`", c.table_id)));
            };
            let Some(text) = table.cell(c.row, c.col) else {
                return Err(schema(
                    &doc.id,
                    "row/col",
                    format!("({}, {}) outside {}x{} table `{}`", c.row, c.col, table.rows(), table.cols(), table.id),
                ));
            };
            if c.raw_text.is_empty() {
                c.raw_text = text.to_owned();
            } else if c.raw_text != text {
                return Err(schema(&doc.id, "raw_text", format!("cell {} text differs from grid", c.key())));
            }
            if c.gold_link.is_some() && !c.gold_cell_type.is_some_and(CellType::is_linkable) {
                return Err(schema(
                    &doc.id,
                    "gold_link",
                    format!("cell {} is linked but its type is not dataset, method or dataset&metric", c.key()),
                ));
            }
            for s in c.gold_attributed_sources.iter().flatten() {
                if let SourceCandidate::Reference(i) = s {
                    if doc.reference(*i).is_none() {
                        return Err(schema(
                            &doc.id,
                            "gold_attributed_sources",
                            format!("cell {} cites missing reference {i}", c.key()),
                        ));
                    }
                }
            }
            if !keys.insert(c.key()) {
                return Err(schema(&doc.id, "cells", format!("duplicate cell {}", c.key())));
            }
        }

        Ok(Self {
            documents,
            doc_pos,
            cells,
        })
    }

    pub fn documents(&self) -> &[DocumentRecord] {
        &self.documents
    }

    pub fn document(&self, id: &str) -> Option<&DocumentRecord> {
        self.doc_pos.get(id).map(|&i| &self.documents[i])
    }

    pub fn cells(&self) -> &[TableCellRecord] {
        &self.cells
    }

    /// Document and table owning `cell`. Both exist for any cell of a loaded corpus.
    pub fn locate(&self, cell: &TableCellRecord) -> Result<(&DocumentRecord, &TableRecord)> {
        let doc = self.document(&cell.document_id).ok_or_else(|| Error::NotFound {
            kind: "document",
            id: cell.document_id.clone(),
        })?;
        let table = doc.table(&cell.table_id).ok_or_else(|| Error::NotFound {
            kind: "table",
            id: cell.table_id.clone(),
        })?;
        Ok((doc, table))
    }

    pub fn topic_of(&self, cell: &TableCellRecord) -> Option<&str> {
        self.document(&cell.document_id).map(|d| d.topic_fold.as_str())
    }

    /// Distinct topics, sorted.
    pub fn topics(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.documents.iter().map(|d| d.topic_fold.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn cells_in<'a>(&'a self, topics: &[String]) -> impl Iterator<Item = &'a TableCellRecord> + 'a {
        let topics: HashSet<String> = topics.iter().cloned().collect();
        self.cells
            .iter()
            .filter(move |c| self.topic_of(c).is_some_and(|t| topics.contains(t)))
    }

    /// Rejects documents whose topic is outside `vocabulary`.
    pub fn check_topics(&self, vocabulary: &[String]) -> Result<()> {
        for d in &self.documents {
            if !vocabulary.contains(&d.topic_fold) {
                return Err(schema(&d.id, "topic_fold", format!("`{}` is not a configured topic", d.topic_fold)));
            }
        }
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_jsonl(&dir.join(DOCUMENTS_FILE), &self.documents)?;
        let tables: Vec<&TableRecord> = self.documents.iter().flat_map(|d| &d.tables).collect();
        write_jsonl(&dir.join(TABLES_FILE), tables)?;
        write_jsonl(&dir.join(CELLS_FILE), &self.cells)
    }
}

pub fn load_corpus(dir: &Path) -> Result<Corpus> {
    let documents = read_jsonl(&dir.join(DOCUMENTS_FILE))?;
    let tables = read_jsonl(&dir.join(TABLES_FILE))?;
    let cells = read_jsonl(&dir.join(CELLS_FILE))?;
    Corpus::from_records(documents, tables, cells)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub validation_topic: String,
    pub test_topic: String,
    pub train_topics: Vec<String>,
}

/// One split per non-validation topic, in sorted topic order.
pub fn make_folds(corpus: &Corpus, validation_topic: &str) -> Result<Vec<FoldSplit>> {
    let topics = corpus.topics();
    if topics.len() < 3 {
        return Err(Error::invalid(format!(
            "cross-domain folds need at least 3 topics, found {}",
            topics.len()
        )));
    }
    if !topics.iter().any(|t| t == validation_topic) {
        return Err(Error::invalid(format!("validation topic `{validation_topic}` is absent from the corpus")));
    }
    Ok(topics
        .iter()
        .filter(|t| *t != validation_topic)
        .map(|test| FoldSplit {
            validation_topic: validation_topic.to_owned(),
            test_topic: test.clone(),
            train_topics: topics
                .iter()
                .filter(|t| *t != validation_topic && *t != test)
                .cloned()
                .collect(),
        })
        .collect())
}
