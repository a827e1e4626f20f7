//! Tokenization and Okapi BM25 over small in-memory collections.

use std::collections::{HashMap, HashSet};

/// Default BM25 term-frequency saturation.
pub const DEFAULT_K1: f64 = 1.2;
/// Default BM25 length normalization.
pub const DEFAULT_B: f64 = 0.75;

/// Lowercases and splits on every non-alphanumeric character. Digits are kept,
/// so `"R2C2"` yields the single token `"r2c2"`.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Distinct query terms in first-occurrence order.
pub fn query_terms(text: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    tokenize(text)
        .into_iter()
        .filter(|t| seen.insert(t.clone()))
        .collect()
}

/// Robertson–Spärck Jones idf with the +1 inside the log, so it stays positive.
pub fn idf(n_docs: usize, doc_freq: usize) -> f64 {
    let n = n_docs as f64;
    let df = doc_freq as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

/// BM25 over a fixed list of texts. Built once per collection.
#[derive(Debug, Clone)]
pub struct Bm25Index {
    params: Bm25Params,
    doc_lens: Vec<usize>,
    avg_len: f64,
    /// term -> [(doc, tf)] in ascending doc order
    postings: HashMap<String, Vec<(usize, u32)>>,
}

impl Bm25Index {
    pub fn new<S: AsRef<str>>(docs: &[S], params: Bm25Params) -> Self {
        let mut postings: HashMap<String, Vec<(usize, u32)>> = HashMap::new();
        let mut doc_lens = Vec::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            let tokens = tokenize(doc.as_ref());
            doc_lens.push(tokens.len());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((i, count));
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable_by_key(|(d, _)| *d);
        }
        let total: usize = doc_lens.iter().sum();
        let avg_len = if doc_lens.is_empty() {
            0.0
        } else {
            total as f64 / doc_lens.len() as f64
        };
        Self {
            params,
            doc_lens,
            avg_len,
            postings,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_lens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_lens.is_empty()
    }

    /// Scores of every document with a positive score, unsorted.
    pub fn scores(&self, query: &str) -> Vec<(usize, f64)> {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        let n = self.doc_lens.len();
        let Bm25Params { k1, b } = self.params;
        for term in query_terms(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let w = idf(n, list.len());
            for &(doc, tf) in list {
                let tf = f64::from(tf);
                let norm = if self.avg_len > 0.0 {
                    1.0 - b + b * self.doc_lens[doc] as f64 / self.avg_len
                } else {
                    1.0
                };
                *acc.entry(doc).or_default() += w * tf * (k1 + 1.0) / (tf + k1 * norm);
            }
        }
        acc.into_iter().filter(|(_, s)| *s > 0.0).collect()
    }

    /// Top `n` documents by score; ties broken by ascending position.
    pub fn top(&self, query: &str, n: usize) -> Vec<(usize, f64)> {
        let mut scored = self.scores(query);
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        scored.truncate(n);
        scored
    }
}
