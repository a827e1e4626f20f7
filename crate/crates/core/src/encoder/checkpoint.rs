//! A checkpoint directory holds `model.json` (weights, opaque to callers) and
//! `manifest.txt`, a `key=value` sidecar naming the backend, model kind, tag
//! vocabulary, encoder configuration and seed.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::context::SegmentTag;
use crate::error::{Error, Result};
use crate::io::{read_json, read_string, write_json, write_string};

use super::EncoderConfig;

pub const MODEL_FILE: &str = "model.json";
pub const MANIFEST_FILE: &str = "manifest.txt";

fn tag_vocabulary() -> String {
    SegmentTag::ALL.iter().map(|t| t.name()).collect::<Vec<_>>().join(",")
}

pub fn render_manifest(kind: &str, config: &EncoderConfig) -> String {
    format!(
        "backend={}\nkind={kind}\ntags={}\ninput_dim={}\nhidden_dim={}\nmax_len={}\nseed={}\n",
        config.backend,
        tag_vocabulary(),
        config.input_dim,
        config.hidden_dim,
        config.max_len,
        config.seed
    )
}

fn parse_manifest(text: &str) -> BTreeMap<&str, &str> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim(), v.trim()))
        .collect()
}

pub fn save<M: Serialize>(dir: &Path, kind: &str, config: &EncoderConfig, model: &M) -> Result<()> {
    write_json(&dir.join(MODEL_FILE), model)?;
    write_string(&dir.join(MANIFEST_FILE), &render_manifest(kind, config))
}

/// Loads a checkpoint of `kind`, rejecting manifests that name a different
/// kind, an unknown backend or a different tag vocabulary.
pub fn load<M: DeserializeOwned>(dir: &Path, kind: &str) -> Result<M> {
    let model_path = dir.join(MODEL_FILE);
    let manifest_path = dir.join(MANIFEST_FILE);
    for p in [&model_path, &manifest_path] {
        if !p.is_file() {
            return Err(Error::MissingArtifact(p.clone()));
        }
    }
    let text = read_string(&manifest_path)?;
    let manifest = parse_manifest(&text);
    let field = |k: &str| {
        manifest
            .get(k)
            .copied()
            .ok_or_else(|| Error::Checkpoint(format!("{}: missing `{k}`", manifest_path.display())))
    };
    if field("kind")? != kind {
        return Err(Error::Checkpoint(format!(
            "{} holds a `{}` model, expected `{kind}`",
            dir.display(),
            field("kind")?
        )));
    }
    field("backend")?.parse::<super::Backend>()?;
    if field("tags")? != tag_vocabulary() {
        return Err(Error::Checkpoint(format!(
            "{}: segment tag vocabulary `{}` differs from `{}`",
            manifest_path.display(),
            field("tags")?,
            tag_vocabulary()
        )));
    }
    read_json(&model_path)
}
