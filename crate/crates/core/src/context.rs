//! Cell, paper and entity representations, and their serialization into
//! segment-tagged token sequences.
//!
//! Token layout (all tokens produced by [`crate::text::tokenize`] unless
//! reserved):
//!
//! * cell: `CELL` content, `META` (`region=<v> pos=<r>,<c> rpos=<r>,<c> ref=<0|1>`),
//!   `ROW` context, `COL` context, then each context sentence prefixed by
//!   [`SEP`], all `SENTENCE`-tagged, in rank order.
//! * paper: `index SEP author SEP year SEP title SEP abstract`, all `PAPER`.
//! * entity: `abbreviation SEP full_name SEP description`, all `ENTITY`.
//!
//! An empty cell serializes to the single `CELL` token [`EMPTY`].

use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, DocumentRecord, ReferenceEntry, TableCellRecord, TableRecord};
use crate::error::{Error, Result};
use crate::kb::Entity;
use crate::text::{tokenize, Bm25Index, Bm25Params};

pub const SEP: &str = "⟨SEP⟩";
pub const EMPTY: &str = "⟨EMPTY⟩";
/// Boundary between the two halves of a fused pair.
pub const PAIR: &str = "⟨PAIR⟩";

pub const DEFAULT_N_SENTENCES: usize = 5;
pub const DEFAULT_MAX_LEN: usize = 512;

fn is_reserved(tok: &str) -> bool {
    matches!(tok, SEP | EMPTY | PAIR)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SegmentTag {
    Cell,
    Sentence,
    Row,
    Col,
    Meta,
    Paper,
    Entity,
}

impl SegmentTag {
    pub const ALL: [SegmentTag; 7] = [
        SegmentTag::Cell,
        SegmentTag::Sentence,
        SegmentTag::Row,
        SegmentTag::Col,
        SegmentTag::Meta,
        SegmentTag::Paper,
        SegmentTag::Entity,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SegmentTag::Cell => "CELL",
            SegmentTag::Sentence => "SENTENCE",
            SegmentTag::Row => "ROW",
            SegmentTag::Col => "COL",
            SegmentTag::Meta => "META",
            SegmentTag::Paper => "PAPER",
            SegmentTag::Entity => "ENTITY",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Region {
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::TopLeft => "top-left",
            Region::TopRight => "top-right",
            Region::BottomLeft => "bottom-left",
            Region::BottomRight => "bottom-right",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellContext {
    pub cell_content: String,
    pub region: Region,
    pub context_sentences: Vec<String>,
    pub row_context: String,
    pub col_context: String,
    pub position: (usize, usize),
    pub reverse_position: (usize, usize),
    pub has_reference: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct TaggedSequence {
    tokens: Vec<String>,
    tags: Vec<SegmentTag>,
}

impl TaggedSequence {
    pub fn new(tokens: Vec<String>, tags: Vec<SegmentTag>) -> Result<Self> {
        if tokens.len() != tags.len() {
            return Err(Error::invalid(format!(
                "{} tokens but {} segment tags",
                tokens.len(),
                tags.len()
            )));
        }
        Ok(Self { tokens, tags })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn tags(&self) -> &[SegmentTag] {
        &self.tags
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// True when at least one CELL, PAPER or ENTITY token is present.
    pub fn has_anchor_span(&self) -> bool {
        self.tags
            .iter()
            .any(|t| matches!(t, SegmentTag::Cell | SegmentTag::Paper | SegmentTag::Entity))
    }

    pub fn count(&self, tag: SegmentTag) -> usize {
        self.tags.iter().filter(|t| **t == tag).count()
    }

    fn push(&mut self, tag: SegmentTag, tok: impl Into<String>) {
        self.tokens.push(tok.into());
        self.tags.push(tag);
    }

    /// Splits on whitespace; reserved tokens pass through, the rest is tokenized.
    fn push_text(&mut self, tag: SegmentTag, text: &str) {
        for chunk in text.split_whitespace() {
            if is_reserved(chunk) {
                self.push(tag, chunk);
            } else {
                for t in tokenize(chunk) {
                    self.push(tag, t);
                }
            }
        }
    }

    /// Drops tokens from the end of the lowest-priority spans until the
    /// sequence fits: sentences first, then column, row, paper/entity text and
    /// finally metadata. CELL tokens are never removed, so the result may still
    /// exceed `max_len` when the cell alone does.
    pub fn truncate(&mut self, max_len: usize) {
        const ORDER: [SegmentTag; 6] = [
            SegmentTag::Sentence,
            SegmentTag::Col,
            SegmentTag::Row,
            SegmentTag::Paper,
            SegmentTag::Entity,
            SegmentTag::Meta,
        ];
        for tag in ORDER {
            if self.len() <= max_len {
                return;
            }
            let mut excess = self.len() - max_len;
            let mut keep = vec![true; self.len()];
            for i in (0..self.len()).rev() {
                if excess == 0 {
                    break;
                }
                if self.tags[i] == tag {
                    keep[i] = false;
                    excess -= 1;
                }
            }
            let mut it = keep.iter();
            self.tokens.retain(|_| *it.next().unwrap());
            let mut it = keep.iter();
            self.tags.retain(|_| *it.next().unwrap());
        }
    }

    pub fn truncated(mut self, max_len: usize) -> Self {
        self.truncate(max_len);
        self
    }

    /// One `TAG<TAB>token` line per token.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for (tok, tag) in self.tokens.iter().zip(&self.tags) {
            s.push_str(tag.name());
            s.push('\t');
            s.push_str(tok);
            s.push('\n');
        }
        s
    }
}

/// Concatenates `left PAIR right`, keeping each side's tags; the boundary token
/// is META-tagged. The right side is cut from its tail to whatever room the
/// left leaves (never below half the budget), then the left is truncated with
/// [`TaggedSequence::truncate`].
pub fn fuse_pair(left: &TaggedSequence, right: &TaggedSequence, max_len: usize) -> TaggedSequence {
    let budget = max_len.saturating_sub(1);
    let right_cap = budget.saturating_sub(left.len()).max(budget / 2);
    let mut right = right.clone();
    right.truncate(right_cap);
    // Paper/entity sequences have no CELL span, so truncate always fits them.
    right.tokens.truncate(right_cap);
    right.tags.truncate(right_cap);
    let left = left.clone().truncated(budget.saturating_sub(right.len()));

    let mut out = left;
    out.push(SegmentTag::Meta, PAIR);
    out.tokens.extend(right.tokens);
    out.tags.extend(right.tags);
    out
}

/// A number after stripping `%`, `±` and thousands separators.
pub fn is_numeric(text: &str) -> bool {
    let cleaned: String = text.chars().filter(|c| !matches!(c, '%' | '±' | ',')).collect();
    let cleaned = cleaned.trim();
    cleaned.chars().any(|c| c.is_ascii_digit()) && cleaned.parse::<f64>().is_ok_and(f64::is_finite)
}

/// Top-left-most numeric cell in row-major order.
pub fn numeric_anchor(table: &TableRecord) -> Option<(usize, usize)> {
    table.grid.iter().enumerate().find_map(|(r, row)| {
        row.iter().position(|c| is_numeric(c)).map(|c| (r, c))
    })
}

/// Quadrant of `(row, col)` relative to the first numeric cell: rows above and
/// columns left of it are top/left. Tables without numbers use the grid center.
pub fn compute_region(row: usize, col: usize, table: &TableRecord) -> Region {
    let (ar, ac) = numeric_anchor(table).unwrap_or((table.rows() / 2, table.cols() / 2));
    match (row < ar, col < ac) {
        (true, true) => Region::TopLeft,
        (true, false) => Region::TopRight,
        (false, true) => Region::BottomLeft,
        (false, false) => Region::BottomRight,
    }
}

static BRACKET_CITATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[\s*\d+(?:\s*[,;–-]\s*\d+)*\s*\]").unwrap());
static NAME_YEAR_CITATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\(\s*[^\W\d_][^()]*?[\s,]\s*(?:19|20)\d{2}[a-z]?\s*\)").unwrap());

/// Inline citation: bracketed integers (`[33]`, `[1, 4]`, `[2-5]`) or an
/// author-year parenthetical (`(Roller et al., 2021)`).
pub fn detect_reference(text: &str) -> bool {
    BRACKET_CITATION.is_match(text) || NAME_YEAR_CITATION.is_match(text)
}

/// BM25 over one document's sentences. Build once per document.
#[derive(Debug, Clone)]
pub struct SentenceRetriever<'a> {
    document: &'a DocumentRecord,
    index: Bm25Index,
}

impl<'a> SentenceRetriever<'a> {
    pub fn new(document: &'a DocumentRecord) -> Self {
        Self {
            document,
            index: Bm25Index::new(&document.sentences, Bm25Params::default()),
        }
    }

    pub fn document(&self) -> &'a DocumentRecord {
        self.document
    }

    pub fn top(&self, query: &str, n: usize) -> Vec<&'a str> {
        self.index
            .top(query, n)
            .into_iter()
            .map(|(i, _)| self.document.sentences[i].as_str())
            .collect()
    }

    pub fn cell_context(&self, cell: &TableCellRecord, n_sentences: usize) -> Result<CellContext> {
        let table = self.document.table(&cell.table_id).ok_or_else(|| Error::NotFound {
            kind: "table",
            id: cell.table_id.clone(),
        })?;
        let content = table.cell(cell.row, cell.col).ok_or_else(|| Error::NotFound {
            kind: "cell",
            id: cell.key().to_string(),
        })?;
        let join = |items: &mut dyn Iterator<Item = &String>| {
            items.map(String::as_str).collect::<Vec<_>>().join(&format!(" {SEP} ")).trim().to_owned()
        };
        Ok(CellContext {
            cell_content: content.to_owned(),
            region: compute_region(cell.row, cell.col, table),
            context_sentences: self.top(content, n_sentences).into_iter().map(str::to_owned).collect(),
            row_context: join(&mut table.grid[cell.row].iter()),
            col_context: join(&mut table.grid.iter().map(|r| &r[cell.col])),
            position: (cell.row, cell.col),
            reverse_position: (table.rows() - 1 - cell.row, table.cols() - 1 - cell.col),
            has_reference: detect_reference(content),
        })
    }
}

/// Top `n` sentences of `document` for `query`; ties keep document order.
pub fn bm25_sentences<'a>(query: &str, document: &'a DocumentRecord, n: usize) -> Vec<&'a str> {
    SentenceRetriever::new(document).top(query, n)
}

pub fn build_cell_context(cell: &TableCellRecord, document: &DocumentRecord, n_sentences: usize) -> Result<CellContext> {
    SentenceRetriever::new(document).cell_context(cell, n_sentences)
}

/// Contexts for `cells` in input order. One sentence index is built per
/// document; cells are processed in parallel.
pub fn build_contexts(corpus: &Corpus, cells: &[&TableCellRecord], n_sentences: usize) -> Result<Vec<CellContext>> {
    use rayon::prelude::*;
    use std::collections::HashMap;

    let mut retrievers: HashMap<&str, SentenceRetriever<'_>> = HashMap::new();
    for c in cells {
        if !retrievers.contains_key(c.document_id.as_str()) {
            let doc = corpus.document(&c.document_id).ok_or_else(|| Error::NotFound {
                kind: "document",
                id: c.document_id.clone(),
            })?;
            retrievers.insert(&doc.id, SentenceRetriever::new(doc));
        }
    }
    cells
        .par_iter()
        .map(|c| retrievers[c.document_id.as_str()].cell_context(c, n_sentences))
        .collect()
}

pub fn meta_string(ctx: &CellContext) -> String {
    format!(
        "region={} pos={},{} rpos={},{} ref={}",
        ctx.region,
        ctx.position.0,
        ctx.position.1,
        ctx.reverse_position.0,
        ctx.reverse_position.1,
        u8::from(ctx.has_reference)
    )
}

pub fn serialize_cell(ctx: &CellContext) -> TaggedSequence {
    let mut s = TaggedSequence::default();
    s.push_text(SegmentTag::Cell, &ctx.cell_content);
    if s.is_empty() {
        s.push(SegmentTag::Cell, EMPTY);
    }
    for tok in meta_string(ctx).split(' ') {
        s.push(SegmentTag::Meta, tok);
    }
    s.push_text(SegmentTag::Row, &ctx.row_context);
    s.push_text(SegmentTag::Col, &ctx.col_context);
    for sentence in &ctx.context_sentences {
        s.push(SegmentTag::Sentence, SEP);
        s.push_text(SegmentTag::Sentence, sentence);
    }
    s
}

fn paper_sequence(index: u32, author: &str, year: Option<i32>, title: &str, abstract_text: &str) -> TaggedSequence {
    let tag = SegmentTag::Paper;
    let mut s = TaggedSequence::default();
    s.push(tag, index.to_string());
    s.push(tag, SEP);
    s.push_text(tag, author);
    s.push(tag, SEP);
    if let Some(y) = year {
        s.push(tag, y.to_string());
    }
    s.push(tag, SEP);
    s.push_text(tag, title);
    s.push(tag, SEP);
    s.push_text(tag, abstract_text);
    s
}

pub fn serialize_paper(reference: &ReferenceEntry) -> TaggedSequence {
    paper_sequence(
        reference.index,
        &reference.first_author_last_name,
        reference.year,
        &reference.title,
        &reference.abstract_text,
    )
}

/// The document as its own attribution candidate, with index `0`.
pub fn serialize_self(document: &DocumentRecord) -> TaggedSequence {
    paper_sequence(0, "", None, &document.title, &document.abstract_text)
}

pub fn serialize_entity(entity: &Entity) -> TaggedSequence {
    let tag = SegmentTag::Entity;
    let mut s = TaggedSequence::default();
    s.push_text(tag, &entity.abbreviation);
    s.push(tag, SEP);
    s.push_text(tag, &entity.full_name);
    s.push(tag, SEP);
    s.push_text(tag, &entity.description);
    s
}
