//! Fielded BM25F index over entity abbreviation, full name and description.
//!
//! Per-field term frequencies are length-normalized against the field's average
//! length, weighted, and summed into one pseudo-frequency before the usual BM25
//! saturation is applied once per term:
//!
//! ```text
//! tf~(t, d) = sum_f  w_f * tf_f(t, d) / (1 - b + b * len_f(d) / avglen_f)
//! score(q, d) = sum_{t in q} idf(t) * tf~ * (k1 + 1) / (k1 + tf~)
//! ```

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::text::{idf, query_terms, tokenize, DEFAULT_B, DEFAULT_K1};

use super::Entity;

pub const FIELD_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Abbreviation = 0,
    FullName = 1,
    Description = 2,
}

impl Field {
    pub const ALL: [Field; FIELD_COUNT] = [Field::Abbreviation, Field::FullName, Field::Description];

    pub fn text(self, e: &Entity) -> &str {
        match self {
            Field::Abbreviation => &e.abbreviation,
            Field::FullName => &e.full_name,
            Field::Description => &e.description,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25fParams {
    pub k1: f64,
    pub b: f64,
    pub abbreviation_weight: f64,
    pub full_name_weight: f64,
    pub description_weight: f64,
}

impl Default for Bm25fParams {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
            abbreviation_weight: 2.0,
            full_name_weight: 3.0,
            description_weight: 1.0,
        }
    }
}

impl Bm25fParams {
    pub fn weight(&self, field: Field) -> f64 {
        match field {
            Field::Abbreviation => self.abbreviation_weight,
            Field::FullName => self.full_name_weight,
            Field::Description => self.description_weight,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.k1 > 0.0) {
            return Err(format!("k1 must be positive, got {}", self.k1));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(format!("b must lie in [0, 1], got {}", self.b));
        }
        for f in Field::ALL {
            if !(self.weight(f) > 0.0) {
                return Err(format!("field weight for {f:?} must be positive"));
            }
        }
        Ok(())
    }
}

/// Inverted index keyed by term; documents are positions in the store's
/// entity list.
#[derive(Debug, Clone)]
pub struct LexicalIndex {
    params: Bm25fParams,
    field_lens: Vec<[u32; FIELD_COUNT]>,
    avg_lens: [f64; FIELD_COUNT],
    postings: HashMap<String, Vec<(usize, [u32; FIELD_COUNT])>>,
}

impl LexicalIndex {
    pub fn build(entities: &[Entity], params: Bm25fParams) -> Self {
        let mut postings: HashMap<String, Vec<(usize, [u32; FIELD_COUNT])>> = HashMap::new();
        let mut field_lens = Vec::with_capacity(entities.len());
        let mut totals = [0u64; FIELD_COUNT];
        for (doc, e) in entities.iter().enumerate() {
            let mut lens = [0u32; FIELD_COUNT];
            let mut tfs: HashMap<String, [u32; FIELD_COUNT]> = HashMap::new();
            for field in Field::ALL {
                let toks = tokenize(field.text(e));
                lens[field as usize] = toks.len() as u32;
                totals[field as usize] += toks.len() as u64;
                for t in toks {
                    tfs.entry(t).or_default()[field as usize] += 1;
                }
            }
            field_lens.push(lens);
            for (term, tf) in tfs {
                postings.entry(term).or_default().push((doc, tf));
            }
        }
        for list in postings.values_mut() {
            list.sort_unstable_by_key(|(d, _)| *d);
        }
        let n = entities.len().max(1) as f64;
        let avg_lens = totals.map(|t| t as f64 / n);
        Self {
            params,
            field_lens,
            avg_lens,
            postings,
        }
    }

    pub fn params(&self) -> &Bm25fParams {
        &self.params
    }

    pub fn num_docs(&self) -> usize {
        self.field_lens.len()
    }

    /// Positive-scoring documents for `query`, unsorted.
    pub fn score_all(&self, query: &str) -> Vec<(usize, f64)> {
        let n = self.num_docs();
        let p = &self.params;
        let mut acc: HashMap<usize, f64> = HashMap::new();
        for term in query_terms(query) {
            let Some(list) = self.postings.get(&term) else {
                continue;
            };
            let w = idf(n, list.len());
            for (doc, tf) in list {
                let mut pseudo = 0.0;
                for field in Field::ALL {
                    let i = field as usize;
                    if tf[i] == 0 {
                        continue;
                    }
                    let norm = if self.avg_lens[i] > 0.0 {
                        1.0 - p.b + p.b * f64::from(self.field_lens[*doc][i]) / self.avg_lens[i]
                    } else {
                        1.0
                    };
                    pseudo += p.weight(field) * f64::from(tf[i]) / norm;
                }
                *acc.entry(*doc).or_default() += w * pseudo * (p.k1 + 1.0) / (p.k1 + pseudo);
            }
        }
        acc.into_iter().filter(|(_, s)| *s > 0.0).collect()
    }
}
