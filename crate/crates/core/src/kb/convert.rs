//! Converter from the public Papers with Code JSON dump (decompressed) to the
//! three JSONL files read by [`super::ingest_kb`].
//!
//! Expected inputs in the source directory: `methods.json`, `datasets.json`,
//! `papers-with-abstracts.json`, each a JSON array. Field names drift between
//! dump versions, so every field is looked up under a list of aliases; fields
//! with no mapping are dropped.
//!
//! Relations come from two places: a paper's `methods` list (matched by method
//! name) and the introducing `paper` of each method or dataset (matched by
//! paper URL, falling back to exact title).

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};
use crate::io::{read_string, write_jsonl};

use super::{Entity, EntityKind, KbCounts, KbPaper, PaperEntityRelation};
use super::{ENTITIES_FILE, PAPERS_FILE, RELATIONS_FILE};

pub const METHODS_SOURCE: &str = "methods.json";
pub const DATASETS_SOURCE: &str = "datasets.json";
pub const PAPERS_SOURCE: &str = "papers-with-abstracts.json";

fn field<'a>(v: &'a Value, aliases: &[&str]) -> Option<&'a Value> {
    aliases.iter().find_map(|k| v.get(*k)).filter(|v| !v.is_null())
}

fn str_field(v: &Value, aliases: &[&str]) -> Option<String> {
    field(v, aliases)
        .and_then(Value::as_str)
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
}

/// `https://paperswithcode.com/method/bert` -> `method/bert`.
fn url_key(url: &str) -> String {
    let trimmed = url.trim().trim_end_matches('/');
    match trimmed.split_once("://") {
        Some((_, rest)) => rest.split_once('/').map_or(rest, |(_, path)| path).to_owned(),
        None => trimmed.trim_start_matches('/').to_owned(),
    }
}

fn load_array(path: &Path) -> Result<Vec<Value>> {
    let text = read_string(path)?;
    match serde_json::from_str(&text)? {
        Value::Array(items) => Ok(items),
        _ => Err(Error::Parse {
            file: path.to_path_buf(),
            line: 1,
            message: "expected a top-level JSON array".into(),
        }),
    }
}

fn year_of(v: &Value) -> Option<i32> {
    if let Some(y) = field(v, &["year"]).and_then(Value::as_i64) {
        return i32::try_from(y).ok();
    }
    str_field(v, &["date", "published", "publication_date"])
        .and_then(|d| d.get(..4).and_then(|y| y.parse().ok()))
}

fn first_author_last_name(v: &Value) -> Option<String> {
    let first = field(v, &["authors"])?.as_array()?.first()?;
    let name = match first {
        Value::String(s) => s.clone(),
        other => str_field(other, &["name", "last_name"])?,
    };
    name.split_whitespace().last().map(str::to_owned)
}

fn entity_of(v: &Value, kind: EntityKind) -> Option<Entity> {
    let name = str_field(v, &["name", "abbreviation"]);
    let full = str_field(v, &["full_name", "fullname"]).or_else(|| name.clone())?;
    let id = str_field(v, &["url", "id"])
        .map(|u| url_key(&u))
        .unwrap_or_else(|| format!("{kind}/{}", full.to_lowercase().replace(' ', "-")));
    Some(Entity {
        id,
        kind,
        abbreviation: name.unwrap_or_else(|| full.clone()),
        full_name: full,
        description: str_field(v, &["description"]).unwrap_or_default(),
    })
}

pub fn convert_pwc_dump(source: &Path, dest: &Path) -> Result<KbCounts> {
    let raw_methods = load_array(&source.join(METHODS_SOURCE))?;
    let raw_datasets = load_array(&source.join(DATASETS_SOURCE))?;
    let raw_papers = load_array(&source.join(PAPERS_SOURCE))?;

    let mut papers: Vec<KbPaper> = Vec::new();
    let mut seen_papers = BTreeSet::new();
    let mut by_title: HashMap<String, String> = HashMap::new();
    for v in &raw_papers {
        let Some(title) = str_field(v, &["title"]) else {
            continue;
        };
        let Some(url) = str_field(v, &["paper_url", "url", "id"]) else {
            continue;
        };
        let id = url_key(&url);
        if !seen_papers.insert(id.clone()) {
            continue;
        }
        by_title.entry(title.to_lowercase()).or_insert_with(|| id.clone());
        papers.push(KbPaper {
            id,
            title,
            abstract_text: str_field(v, &["abstract", "paper_abstract"]).unwrap_or_default(),
            year: year_of(v),
            first_author_last_name: first_author_last_name(v),
        });
    }

    let mut entities: Vec<Entity> = Vec::new();
    let mut seen_entities = BTreeSet::new();
    let mut method_by_name: HashMap<String, String> = HashMap::new();
    let mut relations: BTreeSet<(String, String)> = BTreeSet::new();

    let resolve_paper = |v: &Value| -> Option<String> {
        let p = field(v, &["paper", "introduced_in"])?;
        if let Some(url) = str_field(p, &["url", "paper_url"]) {
            let key = url_key(&url);
            if seen_papers.contains(&key) {
                return Some(key);
            }
        }
        str_field(p, &["title"]).and_then(|t| by_title.get(&t.to_lowercase()).cloned())
    };

    for (raw, kind) in raw_methods
        .iter()
        .map(|v| (v, EntityKind::Method))
        .chain(raw_datasets.iter().map(|v| (v, EntityKind::Dataset)))
    {
        let Some(e) = entity_of(raw, kind) else {
            continue;
        };
        if !seen_entities.insert(e.id.clone()) {
            continue;
        }
        if kind == EntityKind::Method {
            method_by_name.entry(e.abbreviation.to_lowercase()).or_insert_with(|| e.id.clone());
        }
        if let Some(pid) = resolve_paper(raw) {
            relations.insert((pid, e.id.clone()));
        }
        entities.push(e);
    }

    for v in &raw_papers {
        let Some(url) = str_field(v, &["paper_url", "url", "id"]) else {
            continue;
        };
        let pid = url_key(&url);
        for m in field(v, &["methods"]).and_then(Value::as_array).into_iter().flatten() {
            if let Some(eid) = str_field(m, &["name"]).and_then(|n| method_by_name.get(&n.to_lowercase())) {
                relations.insert((pid.clone(), eid.clone()));
            }
        }
    }

    let relations: Vec<PaperEntityRelation> = relations
        .into_iter()
        .map(|(paper_id, entity_id)| PaperEntityRelation { paper_id, entity_id })
        .collect();
    entities.sort_by(|a, b| a.id.cmp(&b.id));
    papers.sort_by(|a, b| a.id.cmp(&b.id));

    write_jsonl(&dest.join(ENTITIES_FILE), &entities)?;
    write_jsonl(&dest.join(PAPERS_FILE), &papers)?;
    write_jsonl(&dest.join(RELATIONS_FILE), &relations)?;

    Ok(KbCounts {
        methods: entities.iter().filter(|e| e.kind == EntityKind::Method).count(),
        datasets: entities.iter().filter(|e| e.kind == EntityKind::Dataset).count(),
        papers: papers.len(),
        relations: relations.len(),
    })
}
