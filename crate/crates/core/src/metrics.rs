//! Span-level evaluation: labeled and boundary-only precision/recall/F1,
//! label accuracy on boundary matches, a confusion matrix and per-label F1.
//!
//! Predictions and gold are matched per instance, keyed by
//! `(id, predicate)`. Matching is exact; each gold span can be matched at
//! most once.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{InstanceKey, LabeledSpan, PredicateInstance};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrfResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub predicted: usize,
    pub gold: usize,
}

impl PrfResult {
    pub fn from_counts(matched: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        PrfResult {
            precision,
            recall,
            f1,
            matched,
            predicted,
            gold,
        }
    }

    /// True when there is nothing to score on either side.
    pub fn zero_support(&self) -> bool {
        self.predicted == 0 && self.gold == 0
    }
}

/// Counts of (gold label, predicted label) over boundary-matched spans.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: BTreeMap<String, BTreeMap<String, usize>>,
}

impl ConfusionMatrix {
    pub fn get(&self, gold: &str, pred: &str) -> usize {
        self.counts
            .get(gold)
            .and_then(|row| row.get(pred))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.counts.values().flat_map(|r| r.values()).sum()
    }

    pub fn diagonal(&self) -> usize {
        self.counts
            .iter()
            .map(|(g, row)| row.get(g).copied().unwrap_or(0))
            .sum()
    }

    /// All labels appearing on either axis, sorted.
    pub fn labels(&self) -> Vec<String> {
        let mut set: BTreeSet<&String> = self.counts.keys().collect();
        set.extend(self.counts.values().flat_map(|r| r.keys()));
        set.into_iter().cloned().collect()
    }

    /// Row percentages; empty rows are left out.
    pub fn row_percentages(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        self.counts
            .iter()
            .filter_map(|(g, row)| {
                let total: usize = row.values().sum();
                (total > 0).then(|| {
                    let pct = row
                        .iter()
                        .map(|(p, &c)| (p.clone(), 100.0 * c as f64 / total as f64))
                        .collect();
                    (g.clone(), pct)
                })
            })
            .collect()
    }

    /// Gold labels as rows, predicted labels as columns.
    pub fn to_csv(&self) -> String {
        let labels = self.labels();
        let mut out = String::from("gold\\pred");
        for l in &labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for g in &labels {
            out.push_str(g);
            for p in &labels {
                let _ = write!(out, ",{}", self.get(g, p));
            }
            out.push('\n');
        }
        out
    }

    fn add(&mut self, gold: &str, pred: &str) {
        *self
            .counts
            .entry(gold.to_string())
            .or_default()
            .entry(pred.to_string())
            .or_default() += 1;
    }
}

/// Spans per instance.
pub type SpanSets = BTreeMap<InstanceKey, Vec<LabeledSpan>>;

/// Collects the `spans` of each instance. Duplicate keys are an error.
pub fn span_sets(instances: &[PredicateInstance]) -> Result<SpanSets> {
    let mut out = SpanSets::new();
    for inst in instances {
        if out.insert(inst.key(), inst.gold_spans().to_vec()).is_some() {
            return Err(Error::Incompatible(format!("duplicate instance {}", inst.key())));
        }
    }
    Ok(out)
}

fn check_aligned(pred: &SpanSets, gold: &SpanSets) -> Result<()> {
    let missing: Vec<String> = gold
        .keys()
        .filter(|k| !pred.contains_key(k))
        .map(|k| k.to_string())
        .collect();
    let extra: Vec<String> = pred
        .keys()
        .filter(|k| !gold.contains_key(k))
        .map(|k| k.to_string())
        .collect();
    if missing.is_empty() && extra.is_empty() {
        return Ok(());
    }
    let mut msg = String::from("prediction and gold instances differ");
    if !missing.is_empty() {
        let _ = write!(msg, "; missing predictions for {}", missing.join(", "));
    }
    if !extra.is_empty() {
        let _ = write!(msg, "; no gold for {}", extra.join(", "));
    }
    Err(Error::Incompatible(msg))
}

/// Size of the multiset intersection of `a` and `b` under `key`.
fn multiset_matches<K: std::hash::Hash + Eq>(
    a: &[LabeledSpan],
    b: &[LabeledSpan],
    key: impl Fn(&LabeledSpan) -> K,
) -> usize {
    let mut counts: HashMap<K, usize> = HashMap::new();
    for s in b {
        *counts.entry(key(s)).or_default() += 1;
    }
    let mut matched = 0;
    for s in a {
        if let Some(c) = counts.get_mut(&key(s)) {
            if *c > 0 {
                *c -= 1;
                matched += 1;
            }
        }
    }
    matched
}

fn prf_by<K: std::hash::Hash + Eq>(
    pred: &SpanSets,
    gold: &SpanSets,
    key: impl Fn(&LabeledSpan) -> K + Copy,
) -> Result<PrfResult> {
    check_aligned(pred, gold)?;
    let (mut m, mut p, mut g) = (0, 0, 0);
    for (k, gs) in gold {
        let ps = &pred[k];
        m += multiset_matches(ps, gs, key);
        p += ps.len();
        g += gs.len();
    }
    Ok(PrfResult::from_counts(m, p, g))
}

/// Exact `⟨i, j, r⟩` matches, micro-averaged.
pub fn labeled_prf(pred: &SpanSets, gold: &SpanSets) -> Result<PrfResult> {
    prf_by(pred, gold, |s| s.clone())
}

/// Matches on `(i, j)` only.
pub fn boundary_prf(pred: &SpanSets, gold: &SpanSets) -> Result<PrfResult> {
    prf_by(pred, gold, |s| s.bounds())
}

type LabelsAt<'a> = BTreeMap<(usize, usize), (Vec<&'a str>, Vec<&'a str>)>;

/// Pairs predicted and gold spans that share boundaries. Same-label pairs
/// are taken first.
fn boundary_pairs(pred: &[LabeledSpan], gold: &[LabeledSpan]) -> Vec<(String, String)> {
    let mut by_bounds = LabelsAt::new();
    for s in gold {
        by_bounds.entry(s.bounds()).or_default().0.push(&s.label);
    }
    for s in pred {
        by_bounds.entry(s.bounds()).or_default().1.push(&s.label);
    }
    let mut pairs = Vec::new();
    for (_, (mut gs, mut ps)) in by_bounds {
        gs.sort_unstable();
        ps.sort_unstable();
        let mut rest_g = Vec::new();
        for g in gs {
            match ps.iter().position(|p| *p == g) {
                Some(k) => {
                    ps.remove(k);
                    pairs.push((g.to_string(), g.to_string()));
                }
                None => rest_g.push(g),
            }
        }
        for (g, p) in rest_g.into_iter().zip(ps) {
            pairs.push((g.to_string(), p.to_string()));
        }
    }
    pairs
}

/// Gold × predicted label counts over boundary-matched spans.
pub fn confusion_matrix(pred: &SpanSets, gold: &SpanSets) -> Result<ConfusionMatrix> {
    check_aligned(pred, gold)?;
    let mut m = ConfusionMatrix::default();
    for (k, gs) in gold {
        for (g, p) in boundary_pairs(&pred[k], gs) {
            m.add(&g, &p);
        }
    }
    Ok(m)
}

/// Fraction of boundary matches with the correct label; `None` when there
/// are no boundary matches.
pub fn label_accuracy(pred: &SpanSets, gold: &SpanSets) -> Result<Option<f64>> {
    let m = confusion_matrix(pred, gold)?;
    let total = m.total();
    Ok((total > 0).then(|| m.diagonal() as f64 / total as f64))
}

/// Labeled P/R/F1 per label. Labels that occur in neither predictions nor
/// gold are absent.
pub fn labelwise_f1(pred: &SpanSets, gold: &SpanSets) -> Result<BTreeMap<String, PrfResult>> {
    check_aligned(pred, gold)?;
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for (k, gs) in gold {
        let ps = &pred[k];
        let labels: BTreeSet<&String> = gs.iter().chain(ps).map(|s| &s.label).collect();
        for label in labels {
            let g: Vec<LabeledSpan> = gs.iter().filter(|s| &s.label == label).cloned().collect();
            let p: Vec<LabeledSpan> = ps.iter().filter(|s| &s.label == label).cloned().collect();
            let c = counts.entry(label.clone()).or_default();
            c.0 += multiset_matches(&p, &g, |s| s.bounds());
            c.1 += p.len();
            c.2 += g.len();
        }
    }
    Ok(counts
        .into_iter()
        .map(|(l, (m, p, g))| (l, PrfResult::from_counts(m, p, g)))
        .collect())
}

/// Everything the evaluator reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub labeled: PrfResult,
    pub boundary: PrfResult,
    pub label_accuracy: Option<f64>,
    pub labelwise: BTreeMap<String, PrfResult>,
    pub confusion: ConfusionMatrix,
    pub instances: usize,
}

pub fn evaluate(pred: &SpanSets, gold: &SpanSets) -> Result<Report> {
    Ok(Report {
        labeled: labeled_prf(pred, gold)?,
        boundary: boundary_prf(pred, gold)?,
        label_accuracy: label_accuracy(pred, gold)?,
        labelwise: labelwise_f1(pred, gold)?,
        confusion: confusion_matrix(pred, gold)?,
        instances: gold.len(),
    })
}

pub fn evaluate_instances(pred: &[PredicateInstance], gold: &[PredicateInstance]) -> Result<Report> {
    evaluate(&span_sets(pred)?, &span_sets(gold)?)
}

impl Report {
    /// Aligned plain-text summary.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<12} {:>9} {:>9} {:>9} {:>8} {:>8} {:>8}",
            "", "precision", "recall", "f1", "matched", "pred", "gold"
        );
        let row = |out: &mut String, name: &str, r: &PrfResult| {
            let _ = writeln!(
                out,
                "{:<12} {:>9.4} {:>9.4} {:>9.4} {:>8} {:>8} {:>8}",
                name, r.precision, r.recall, r.f1, r.matched, r.predicted, r.gold
            );
        };
        row(&mut out, "labeled", &self.labeled);
        row(&mut out, "boundary", &self.boundary);
        match self.label_accuracy {
            Some(a) => {
                let _ = writeln!(out, "label accuracy {a:.4}");
            }
            None => out.push_str("label accuracy n/a (no boundary matches)\n"),
        }
        out.push('\n');
        for (label, r) in &self.labelwise {
            row(&mut out, label, r);
        }
        out
    }
}
