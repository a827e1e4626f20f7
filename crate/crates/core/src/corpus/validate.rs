use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::asm::SourceCandidate;
use crate::ctc::CellType;
use crate::ed::GoldLink;

use super::Corpus;

/// Published class shares of the reference release, as fractions.
const REFERENCE_CTC: [(CellType, f64); 5] = [
    (CellType::Other, 0.74),
    (CellType::Dataset, 0.08),
    (CellType::Method, 0.14),
    (CellType::Metric, 0.03),
    (CellType::DatasetAndMetric, 0.004),
];
const REFERENCE_ASM: AsmDistribution = AsmDistribution {
    missing: 0.166,
    self_attributed: 0.119,
    reference: 0.715,
};
const REFERENCE_OUTKB: f64 = 0.428;
/// Two percentage points.
const TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AsmDistribution {
    pub missing: f64,
    #[serde(rename = "self")]
    pub self_attributed: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldCounts {
    pub papers: usize,
    pub tables: usize,
    pub ctc: usize,
    pub asm: usize,
    pub el: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub counts: FoldCounts,
    pub ctc_counts: BTreeMap<CellType, usize>,
    pub ctc_distribution: BTreeMap<CellType, f64>,
    pub asm_distribution: Option<AsmDistribution>,
    pub outkb_fraction: Option<f64>,
    pub per_fold: BTreeMap<String, FoldCounts>,
    pub warnings: Vec<String>,
}

fn frac(n: usize, d: usize) -> f64 {
    n as f64 / d as f64
}

fn check(warnings: &mut Vec<String>, what: &str, observed: f64, expected: f64) {
    if (observed - expected).abs() > TOLERANCE {
        warnings.push(format!(
            "{what}: {:.1}% deviates from the reference {:.1}% by more than 2 points",
            observed * 100.0,
            expected * 100.0
        ));
    }
}

/// Class balance, attribution and outKB shares, and per-topic counts.
/// Deviations from the reference release are warnings only.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut r = ValidationReport::default();
    let mut papers: BTreeMap<String, [BTreeSet<&str>; 3]> = BTreeMap::new();
    let mut tables: BTreeMap<String, [BTreeSet<(&str, &str)>; 3]> = BTreeMap::new();
    let (mut missing, mut selfish, mut referenced) = (0usize, 0usize, 0usize);
    let mut outkb = 0usize;

    for cell in corpus.cells() {
        let topic = corpus.topic_of(cell).unwrap_or_default().to_owned();
        let fold = r.per_fold.entry(topic.clone()).or_default();
        let p = papers.entry(topic.clone()).or_default();
        let t = tables.entry(topic).or_default();
        let key = (cell.document_id.as_str(), cell.table_id.as_str());

        if let Some(ty) = cell.gold_cell_type {
            r.counts.ctc += 1;
            fold.ctc += 1;
            *r.ctc_counts.entry(ty).or_default() += 1;
            p[0].insert(&cell.document_id);
            t[0].insert(key);
        }
        if let Some(sources) = &cell.gold_attributed_sources {
            r.counts.asm += 1;
            fold.asm += 1;
            p[1].insert(&cell.document_id);
            t[1].insert(key);
            if sources.iter().any(|s| matches!(s, SourceCandidate::Reference(_))) {
                referenced += 1;
            } else if sources.contains(&SourceCandidate::SelfDoc) {
                selfish += 1;
            } else {
                missing += 1;
            }
        }
        if let Some(link) = &cell.gold_link {
            r.counts.el += 1;
            fold.el += 1;
            p[2].insert(&cell.document_id);
            t[2].insert(key);
            if *link == GoldLink::OutKb {
                outkb += 1;
            }
        }
    }

    for (topic, fold) in &mut r.per_fold {
        fold.papers = papers[topic][0].len();
        fold.tables = tables[topic][0].len();
    }
    r.counts.papers = papers.values().flat_map(|p| p[0].iter()).collect::<BTreeSet<_>>().len();
    r.counts.tables = tables.values().map(|t| t[0].len()).sum();

    if r.counts.ctc > 0 {
        for (ty, expected) in REFERENCE_CTC {
            let n = r.ctc_counts.get(&ty).copied().unwrap_or(0);
            let share = frac(n, r.counts.ctc);
            r.ctc_distribution.insert(ty, share);
            check(&mut r.warnings, &format!("cell type {ty}"), share, expected);
        }
    } else {
        r.warnings.push("no cell-type annotations".into());
    }

    if r.counts.asm > 0 {
        let d = AsmDistribution {
            missing: frac(missing, r.counts.asm),
            self_attributed: frac(selfish, r.counts.asm),
            reference: frac(referenced, r.counts.asm),
        };
        check(&mut r.warnings, "missing attributed source", d.missing, REFERENCE_ASM.missing);
        check(&mut r.warnings, "self-attributed", d.self_attributed, REFERENCE_ASM.self_attributed);
        check(&mut r.warnings, "reference-attributed", d.reference, REFERENCE_ASM.reference);
        r.asm_distribution = Some(d);
    } else {
        r.warnings.push("no attributed-source annotations".into());
    }

    if r.counts.el > 0 {
        let f = frac(outkb, r.counts.el);
        check(&mut r.warnings, "outKB mentions", f, REFERENCE_OUTKB);
        r.outkb_fraction = Some(f);
    } else {
        r.warnings.push("no entity-link annotations".into());
    }
    r
}
