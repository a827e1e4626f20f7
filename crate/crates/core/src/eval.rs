//! Metrics: cell typing P/R/F1, end-to-end linking, recall@K, threshold
//! sweeps and Pearson correlation. Micro figures pool cells across folds.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::asm::{eval_asm, prf, AsmMetrics, SourceCandidate, SourceRanking};
use crate::cer::recall_at_k;
use crate::corpus::CellKey;
use crate::ctc::CellType;
use crate::ed::{decide, GoldLink, MatchScore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Gold instances of the class.
    pub support: usize,
}

impl Prf {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let (precision, recall, f1) = prf(tp, fp, fn_);
        Self {
            precision,
            recall,
            f1,
            support: tp + fn_,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CtcReport {
    pub per_class: BTreeMap<CellType, Prf>,
    pub micro: Prf,
    pub cells: usize,
}

fn missing(kind: &'static str, cell: &CellKey) -> Error {
    Error::NotFound {
        kind,
        id: cell.to_string(),
    }
}

/// One-vs-rest scores per class; micro over all cells. Every gold cell needs
/// a prediction.
pub fn eval_ctc(predictions: &BTreeMap<CellKey, CellType>, gold: &BTreeMap<CellKey, CellType>) -> Result<CtcReport> {
    let mut tp = [0usize; 5];
    let mut fp = [0usize; 5];
    let mut fn_ = [0usize; 5];
    for (cell, g) in gold {
        let p = predictions.get(cell).ok_or_else(|| missing("cell type prediction", cell))?;
        if p == g {
            tp[g.index()] += 1;
        } else {
            fp[p.index()] += 1;
            fn_[g.index()] += 1;
        }
    }
    let per_class = CellType::ALL
        .into_iter()
        .map(|t| (t, Prf::from_counts(tp[t.index()], fp[t.index()], fn_[t.index()])))
        .collect();
    Ok(CtcReport {
        per_class,
        micro: Prf::from_counts(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum()),
        cells: gold.len(),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElCounts {
    pub cells: usize,
    pub gold_outkb: usize,
    pub gold_inkb: usize,
    pub outkb_tp: usize,
    pub outkb_fp: usize,
    pub outkb_fn: usize,
    /// Gold-inKB cells linked to their gold entity.
    pub hits: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ElReport {
    pub outkb: Prf,
    pub hit_at_1: f64,
    /// `(outkb_tp + hits) / cells`.
    pub accuracy: f64,
    /// Gold outKB over gold inKB; undefined without inKB cells.
    pub oi_ratio: Option<f64>,
    pub counts: ElCounts,
}

impl ElReport {
    pub fn from_counts(c: ElCounts) -> Self {
        let ratio = |n: usize, d: usize| if d == 0 { 0.0 } else { n as f64 / d as f64 };
        Self {
            outkb: Prf::from_counts(c.outkb_tp, c.outkb_fp, c.outkb_fn),
            hit_at_1: ratio(c.hits, c.gold_inkb),
            accuracy: ratio(c.outkb_tp + c.hits, c.cells),
            oi_ratio: (c.gold_inkb > 0).then(|| c.gold_outkb as f64 / c.gold_inkb as f64),
            counts: c,
        }
    }
}

fn el_counts<'a>(pairs: impl Iterator<Item = (&'a GoldLink, &'a GoldLink)>) -> ElCounts {
    let mut c = ElCounts::default();
    for (gold, pred) in pairs {
        c.cells += 1;
        match (gold, pred) {
            (GoldLink::OutKb, GoldLink::OutKb) => {
                c.gold_outkb += 1;
                c.outkb_tp += 1;
            }
            (GoldLink::OutKb, GoldLink::Entity(_)) => {
                c.gold_outkb += 1;
                c.outkb_fn += 1;
            }
            (GoldLink::Entity(_), GoldLink::OutKb) => {
                c.gold_inkb += 1;
                c.outkb_fp += 1;
            }
            (GoldLink::Entity(g), GoldLink::Entity(p)) => {
                c.gold_inkb += 1;
                c.hits += usize::from(g == p);
            }
        }
    }
    c
}

/// outKB is the positive class. A gold cell counts as correct when both
/// sides are outKB or the predicted entity equals the gold entity.
pub fn eval_el(decisions: &BTreeMap<CellKey, GoldLink>, gold: &BTreeMap<CellKey, GoldLink>) -> Result<ElReport> {
    let pairs = gold
        .iter()
        .map(|(cell, g)| Ok((g, decisions.get(cell).ok_or_else(|| missing("link decision", cell))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(ElReport::from_counts(el_counts(pairs.into_iter())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub outkb_predictions: usize,
    pub report: ElReport,
}

/// Re-decides every gold cell at each threshold from retained scores. A gold
/// cell without scores has no candidates and is outKB at every threshold.
pub fn sweep_thresholds(
    scores: &BTreeMap<CellKey, Vec<MatchScore>>,
    gold: &BTreeMap<CellKey, GoldLink>,
    grid: &[f64],
) -> Vec<SweepRow> {
    grid.iter()
        .map(|&t| {
            let decisions: BTreeMap<CellKey, GoldLink> = gold
                .keys()
                .map(|cell| {
                    let s = scores.get(cell).map_or(&[][..], Vec::as_slice);
                    (cell.clone(), decide(cell.clone(), s, t).outcome)
                })
                .collect();
            let report = eval_el(&decisions, gold).expect("every gold cell has a decision");
            SweepRow {
                threshold: t,
                outkb_predictions: decisions.values().filter(|d| d.is_outkb()).count(),
                report,
            }
        })
        .collect()
}

/// `0, 0.05, …, 1` plus one point just above 1.
pub fn default_threshold_grid() -> Vec<f64> {
    let mut g: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    g.push(1.0 + 1e-9);
    g
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid(format!(
            "pearson needs two equal-length series of at least 2 values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::invalid("pearson is undefined for a constant series"));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// `(K, recall)` at each cutoff.
pub fn recall_curve(
    candidates: &BTreeMap<CellKey, Vec<String>>,
    gold: &BTreeMap<CellKey, GoldLink>,
    cutoffs: &[usize],
) -> Vec<(usize, f64)> {
    cutoffs.iter().map(|&k| (k, recall_at_k(candidates, gold, k))).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub ctc: Option<CtcReport>,
    pub el: Option<ElReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ctc: Option<CtcReport>,
    pub asm: Option<AsmMetrics>,
    pub el: Option<ElReport>,
    pub recall_at_k: Vec<(usize, f64)>,
    pub per_fold: BTreeMap<String, FoldReport>,
    /// Correlation of per-fold O/I ratio with per-fold accuracy.
    pub pearson_oi_accuracy: Option<f64>,
    pub sweep: Vec<SweepRow>,
}

/// Everything the report needs, keyed by cell. `topics` maps each cell to
/// its fold.
#[derive(Debug, Clone, Default)]
pub struct EvalInputs {
    pub topics: BTreeMap<CellKey, String>,
    pub gold_types: BTreeMap<CellKey, CellType>,
    pub predicted_types: BTreeMap<CellKey, CellType>,
    pub gold_links: BTreeMap<CellKey, GoldLink>,
    pub decisions: BTreeMap<CellKey, GoldLink>,
    pub candidates: BTreeMap<CellKey, Vec<String>>,
    pub scores: BTreeMap<CellKey, Vec<MatchScore>>,
    pub gold_sources: BTreeMap<CellKey, BTreeSet<SourceCandidate>>,
    pub rankings: BTreeMap<CellKey, SourceRanking>,
}

fn restrict<V: Clone>(m: &BTreeMap<CellKey, V>, topics: &BTreeMap<CellKey, String>, topic: &str) -> BTreeMap<CellKey, V> {
    m.iter()
        .filter(|(k, _)| topics.get(*k).is_some_and(|t| t == topic))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect()
}

/// Full report. Gold EL cells with no decision (not sent to linking) count
/// as predicted outKB.
pub fn build_report(inputs: &EvalInputs, cutoffs: &[usize], grid: &[f64]) -> Result<MetricsReport> {
    let mut decisions = inputs.decisions.clone();
    for cell in inputs.gold_links.keys() {
        decisions.entry(cell.clone()).or_insert(GoldLink::OutKb);
    }
    let mut report = MetricsReport {
        ctc: (!inputs.gold_types.is_empty())
            .then(|| eval_ctc(&inputs.predicted_types, &inputs.gold_types))
            .transpose()?,
        asm: (!inputs.gold_sources.is_empty())
            .then(|| eval_asm(&inputs.rankings, &inputs.gold_sources))
            .transpose()?,
        el: (!inputs.gold_links.is_empty())
            .then(|| eval_el(&decisions, &inputs.gold_links))
            .transpose()?,
        recall_at_k: recall_curve(&inputs.candidates, &inputs.gold_links, cutoffs),
        sweep: sweep_thresholds(&inputs.scores, &inputs.gold_links, grid),
        ..MetricsReport::default()
    };
    let mut folds: Vec<&String> = inputs.topics.values().collect();
    folds.sort();
    folds.dedup();
    for topic in folds {
        let gold_types = restrict(&inputs.gold_types, &inputs.topics, topic);
        let gold_links = restrict(&inputs.gold_links, &inputs.topics, topic);
        report.per_fold.insert(
            topic.clone(),
            FoldReport {
                ctc: (!gold_types.is_empty())
                    .then(|| eval_ctc(&inputs.predicted_types, &gold_types))
                    .transpose()?,
                el: (!gold_links.is_empty()).then(|| eval_el(&decisions, &gold_links)).transpose()?,
            },
        );
    }
    let (oi, acc): (Vec<f64>, Vec<f64>) = report
        .per_fold
        .values()
        .filter_map(|f| f.el.as_ref())
        .filter_map(|el| el.oi_ratio.map(|r| (r, el.accuracy)))
        .unzip();
    report.pearson_oi_accuracy = pearson(&oi, &acc).ok();
    Ok(report)
}

fn pct(x: f64) -> String {
    format!("{:6.1}", x * 100.0)
}

pub fn render_text(r: &MetricsReport) -> String {
    let mut s = String::new();
    if let Some(ctc) = &r.ctc {
        let _ = writeln!(s, "Cell type classification ({} cells)", ctc.cells);
        let _ = writeln!(s, "{:<20} {:>6} {:>6} {:>6} {:>8}", "class", "P", "R", "F1", "support");
        for (t, m) in &ctc.per_class {
            let _ = writeln!(s, "{:<20} {} {} {} {:>8}", t.name(), pct(m.precision), pct(m.recall), pct(m.f1), m.support);
        }
        let m = &ctc.micro;
        let _ = writeln!(s, "{:<20} {} {} {} {:>8}\n", "micro", pct(m.precision), pct(m.recall), pct(m.f1), m.support);
    }
    if let Some(a) = &r.asm {
        let _ = writeln!(
            s,
            "Attributed sources ({} cells)\n  MRR {}  P {}  R {}  F1 {}\n",
            a.cells,
            pct(a.mrr),
            pct(a.precision),
            pct(a.recall),
            pct(a.f1)
        );
    }
    if !r.recall_at_k.is_empty() {
        let _ = writeln!(s, "Candidate recall@K");
        for (k, v) in &r.recall_at_k {
            let _ = writeln!(s, "  K={k:<4} {}", pct(*v));
        }
        s.push('\n');
    }
    let el_line = |s: &mut String, name: &str, el: &ElReport| {
        let oi = el.oi_ratio.map_or_else(|| "   n/a".to_owned(), |r| format!("{r:6.2}"));
        let _ = writeln!(
            s,
            "{:<24} {} {} {} {} {} {} {:>6}",
            name,
            pct(el.outkb.precision),
            pct(el.outkb.recall),
            pct(el.outkb.f1),
            pct(el.hit_at_1),
            pct(el.accuracy),
            oi,
            el.counts.cells
        );
    };
    let header = format!(
        "{:<24} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "fold", "out-P", "out-R", "out-F1", "hit@1", "acc", "O/I", "cells"
    );
    if r.el.is_some() {
        let _ = writeln!(s, "Entity linking\n{header}");
        for (topic, f) in &r.per_fold {
            if let Some(el) = &f.el {
                el_line(&mut s, topic, el);
            }
        }
        if let Some(el) = &r.el {
            el_line(&mut s, "micro", el);
        }
        match r.pearson_oi_accuracy {
            Some(p) => {
                let _ = writeln!(s, "Pearson r (O/I vs accuracy): {p:.3}");
            }
            None => {
                let _ = writeln!(s, "Pearson r (O/I vs accuracy): n/a");
            }
        }
    }
    s
}

pub fn recall_csv(r: &MetricsReport) -> String {
    let mut s = String::from("k,recall\n");
    for (k, v) in &r.recall_at_k {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("threshold,outkb_predictions,outkb_precision,outkb_recall,outkb_f1,hit_at_1,accuracy\n");
    for row in rows {
        let e = &row.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            row.threshold, row.outkb_predictions, e.outkb.precision, e.outkb.recall, e.outkb.f1, e.hit_at_1, e.accuracy
        );
    }
    s
}
