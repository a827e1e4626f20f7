//! Target knowledge base: entities, papers, paper–entity relations, and
//! lexical search over entities.

pub mod convert;
pub mod index;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_jsonl, write_jsonl};

pub use index::{Bm25fParams, Field, LexicalIndex};

pub const ENTITIES_FILE: &str = "entities.jsonl";
pub const PAPERS_FILE: &str = "papers.jsonl";
pub const RELATIONS_FILE: &str = "relations.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityKind {
    Method,
    Dataset,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EntityKind::Method => "method",
            EntityKind::Dataset => "dataset",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    #[serde(default)]
    pub abbreviation: String,
    pub full_name: String,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbPaper {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract", default)]
    pub abstract_text: String,
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default)]
    pub first_author_last_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PaperEntityRelation {
    pub paper_id: String,
    pub entity_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KbCounts {
    pub methods: usize,
    pub datasets: usize,
    pub papers: usize,
    pub relations: usize,
}

/// Immutable after construction; share by reference across threads.
#[derive(Debug, Clone)]
pub struct KbStore {
    /// Sorted by id; positions double as index document ids.
    entities: Vec<Entity>,
    entity_pos: HashMap<String, usize>,
    papers: Vec<KbPaper>,
    paper_pos: HashMap<String, usize>,
    /// paper position -> entity positions (ascending, hence ascending id)
    relations: BTreeMap<usize, BTreeSet<usize>>,
    index: LexicalIndex,
}

impl KbStore {
    pub fn from_records(
        entities: Vec<Entity>,
        papers: Vec<KbPaper>,
        relations: Vec<PaperEntityRelation>,
        params: Bm25fParams,
    ) -> Result<Self> {
        params.validate().map_err(Error::Config)?;

        let mut entities = entities;
        entities.sort_by(|a, b| a.id.cmp(&b.id));
        let mut entity_pos = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            if e.full_name.trim().is_empty() {
                return Err(Error::invalid(format!("entity `{}` has an empty full_name", e.id)));
            }
            if entity_pos.insert(e.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "entity",
                    id: e.id.clone(),
                });
            }
        }

        let mut papers = papers;
        papers.sort_by(|a, b| a.id.cmp(&b.id));
        let mut paper_pos = HashMap::with_capacity(papers.len());
        for (i, p) in papers.iter().enumerate() {
            if p.title.trim().is_empty() {
                return Err(Error::invalid(format!("paper `{}` has an empty title", p.id)));
            }
            if paper_pos.insert(p.id.clone(), i).is_some() {
                return Err(Error::DuplicateId {
                    kind: "paper",
                    id: p.id.clone(),
                });
            }
        }

        let mut dangling = BTreeSet::new();
        let mut rel: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
        for r in &relations {
            let p = paper_pos.get(&r.paper_id);
            let e = entity_pos.get(&r.entity_id);
            if p.is_none() {
                dangling.insert(format!("paper:{}", r.paper_id));
            }
            if e.is_none() {
                dangling.insert(format!("entity:{}", r.entity_id));
            }
            if let (Some(&p), Some(&e)) = (p, e) {
                rel.entry(p).or_default().insert(e);
            }
        }
        if !dangling.is_empty() {
            return Err(Error::DanglingRelations(dangling.into_iter().collect()));
        }

        let index = LexicalIndex::build(&entities, params);
        Ok(Self {
            entities,
            entity_pos,
            papers,
            paper_pos,
            relations: rel,
            index,
        })
    }

    pub fn counts(&self) -> KbCounts {
        KbCounts {
            methods: self.entities.iter().filter(|e| e.kind == EntityKind::Method).count(),
            datasets: self.entities.iter().filter(|e| e.kind == EntityKind::Dataset).count(),
            papers: self.papers.len(),
            relations: self.relations.values().map(BTreeSet::len).sum(),
        }
    }

    /// Entities in ascending id order.
    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn papers(&self) -> &[KbPaper] {
        &self.papers
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entity_pos.get(id).map(|&i| &self.entities[i])
    }

    pub fn paper(&self, id: &str) -> Option<&KbPaper> {
        self.paper_pos.get(id).map(|&i| &self.papers[i])
    }

    pub fn relations(&self) -> impl Iterator<Item = PaperEntityRelation> + '_ {
        self.relations.iter().flat_map(move |(&p, es)| {
            es.iter().map(move |&e| PaperEntityRelation {
                paper_id: self.papers[p].id.clone(),
                entity_id: self.entities[e].id.clone(),
            })
        })
    }

    /// Entities related to `paper_id`, ascending by entity id.
    pub fn entities_for_paper(&self, paper_id: &str, kind: Option<EntityKind>) -> Result<Vec<&Entity>> {
        let &p = self.paper_pos.get(paper_id).ok_or_else(|| Error::NotFound {
            kind: "paper",
            id: paper_id.to_owned(),
        })?;
        Ok(self
            .relations
            .get(&p)
            .into_iter()
            .flatten()
            .map(|&e| &self.entities[e])
            .filter(|e| kind.is_none_or(|k| e.kind == k))
            .collect())
    }

    /// BM25F search. Scores are non-increasing; ties go to the smaller id.
    pub fn search_bm25f(&self, query: &str, kind: Option<EntityKind>, k: usize) -> Vec<(&Entity, f64)> {
        let mut hits: Vec<(&Entity, f64)> = self
            .index
            .score_all(query)
            .into_iter()
            .map(|(doc, s)| (&self.entities[doc], s))
            .filter(|(e, _)| kind.is_none_or(|k| e.kind == k))
            .collect();
        hits.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.id.cmp(&b.0.id)));
        hits.truncate(k);
        hits
    }

    pub fn index(&self) -> &LexicalIndex {
        &self.index
    }

    /// Writes the three dump files into `dir`.
    pub fn write_dump(&self, dir: &Path) -> Result<()> {
        write_jsonl(&dir.join(ENTITIES_FILE), &self.entities)?;
        write_jsonl(&dir.join(PAPERS_FILE), &self.papers)?;
        let rels: Vec<_> = self.relations().collect();
        write_jsonl(&dir.join(RELATIONS_FILE), &rels)
    }
}

/// Loads `entities.jsonl`, `papers.jsonl` and `relations.jsonl` from `dir`.
pub fn ingest_kb(dir: &Path, params: Bm25fParams) -> Result<KbStore> {
    let entities: Vec<Entity> = read_jsonl(&dir.join(ENTITIES_FILE))?;
    let papers: Vec<KbPaper> = read_jsonl(&dir.join(PAPERS_FILE))?;
    let relations: Vec<PaperEntityRelation> = read_jsonl(&dir.join(RELATIONS_FILE))?;
    let store = KbStore::from_records(entities, papers, relations, params)?;
    let c = store.counts();
    tracing::info!(
        methods = c.methods,
        datasets = c.datasets,
        papers = c.papers,
        relations = c.relations,
        "ingested knowledge base"
    );
    Ok(store)
}
