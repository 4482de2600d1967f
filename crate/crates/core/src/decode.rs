//! Span enumeration and decoding.
//!
//! Two decoders are provided. [`argmax_decode`] picks the best span per
//! label independently and may return overlapping spans. [`greedy_select`]
//! walks all (span, label) candidates in descending score order and keeps a
//! candidate only if it overlaps nothing already kept and its label is not
//! a core label that has already been used.
//!
//! Span indices are 1-based and inclusive throughout.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledSpan;
use crate::error::{Error, Result};
use crate::spanscore::ScoreMatrix;

/// Default core roles: at most one span each per predicate.
pub const DEFAULT_CORE_LABELS: [&str; 7] = ["A0", "A1", "A2", "A3", "A4", "A5", "AA"];

/// `T(T+1)/2`.
pub fn num_spans(len: usize) -> usize {
    len * (len + 1) / 2
}

/// All `(i, j)` with `1 ≤ i ≤ j ≤ len`, ordered lexicographically.
pub fn enumerate_spans(len: usize) -> Result<Vec<(usize, usize)>> {
    if len < 1 {
        return Err(Error::contract("cannot enumerate spans of an empty sentence"));
    }
    let mut spans = Vec::with_capacity(num_spans(len));
    for i in 1..=len {
        for j in i..=len {
            spans.push((i, j));
        }
    }
    Ok(spans)
}

/// Position of the 1-based span `(i, j)` in [`enumerate_spans`] order.
pub fn span_index(i: usize, j: usize, len: usize) -> usize {
    debug_assert!(1 <= i && i <= j && j <= len);
    (i - 1) * (len + 1) - (i - 1) * i / 2 + (j - i)
}

pub fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreLabelSet {
    labels: BTreeSet<String>,
}

impl Default for CoreLabelSet {
    fn default() -> Self {
        CoreLabelSet::new(DEFAULT_CORE_LABELS)
    }
}

impl CoreLabelSet {
    pub fn new<I, S>(labels: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        CoreLabelSet {
            labels: labels.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.contains(label)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }
}

/// One cell of a score matrix: span `(start, end)` with label index `label`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub start: usize,
    pub end: usize,
    pub label: usize,
    pub score: f64,
}

/// Every cell of `m` as a candidate, label-major.
pub fn flatten(m: &ScoreMatrix) -> Vec<Candidate> {
    let spans = m.spans();
    let mut out = Vec::with_capacity(m.num_labels() * spans.len());
    for label in 0..m.num_labels() {
        for (s, &(start, end)) in spans.iter().enumerate() {
            out.push(Candidate {
                start,
                end,
                label,
                score: m.value(label, s),
            });
        }
    }
    out
}

/// Drops candidates whose span covers `predicate` (the null span included)
/// and candidates scoring strictly below their label's null-span score.
pub fn filter_candidates(cands: &[Candidate], predicate: usize) -> Result<Vec<Candidate>> {
    let num_labels = cands.iter().map(|c| c.label + 1).max().unwrap_or(0);
    let mut null = vec![None; num_labels];
    for c in cands {
        if c.start == predicate && c.end == predicate {
            null[c.label] = Some(c.score);
        }
    }
    let mut kept = Vec::new();
    for c in cands {
        let threshold = null[c.label].ok_or_else(|| {
            Error::contract(format!(
                "predicate {predicate} has no null-span candidate for label {}",
                c.label
            ))
        })?;
        if c.start <= predicate && predicate <= c.end {
            continue;
        }
        if c.score < threshold {
            continue;
        }
        kept.push(*c);
    }
    Ok(kept)
}

/// Descending score, then label index, then span position. Signed zeros
/// compare equal.
fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    (b.score + 0.0)
        .total_cmp(&(a.score + 0.0))
        .then(a.label.cmp(&b.label))
        .then((a.start, a.end).cmp(&(b.start, b.end)))
}

/// Span-consistent greedy search. The result is sorted by position.
pub fn greedy_select(
    m: &ScoreMatrix,
    predicate: usize,
    core: &CoreLabelSet,
) -> Result<Vec<LabeledSpan>> {
    if predicate < 1 || predicate > m.len() {
        return Err(Error::contract(format!(
            "predicate {predicate} outside sentence of length {}",
            m.len()
        )));
    }
    let is_core: Vec<bool> = m.labels().iter().map(|l| core.contains(l)).collect();
    let mut cands = filter_candidates(&flatten(m), predicate)?;
    cands.sort_by(candidate_order);

    let mut used_core = vec![false; m.num_labels()];
    let mut chosen: Vec<Candidate> = Vec::new();
    for c in cands {
        if used_core[c.label] {
            continue;
        }
        if chosen
            .iter()
            .any(|s| overlaps((s.start, s.end), (c.start, c.end)))
        {
            continue;
        }
        if is_core[c.label] {
            used_core[c.label] = true;
        }
        chosen.push(c);
    }
    Ok(to_spans(m, chosen))
}

/// Best span per label; labels whose best span is the null span `(p, p)`
/// are omitted. Ties go to the earliest span in canonical order.
pub fn argmax_decode(m: &ScoreMatrix, predicate: usize) -> Result<Vec<LabeledSpan>> {
    if predicate < 1 || predicate > m.len() {
        return Err(Error::contract(format!(
            "predicate {predicate} outside sentence of length {}",
            m.len()
        )));
    }
    let spans = m.spans();
    let mut chosen = Vec::new();
    for label in 0..m.num_labels() {
        let mut best = 0;
        for s in 1..spans.len() {
            if m.value(label, s) > m.value(label, best) {
                best = s;
            }
        }
        let (start, end) = spans[best];
        if (start, end) != (predicate, predicate) {
            chosen.push(Candidate {
                start,
                end,
                label,
                score: m.value(label, best),
            });
        }
    }
    Ok(to_spans(m, chosen))
}

fn to_spans(m: &ScoreMatrix, chosen: Vec<Candidate>) -> Vec<LabeledSpan> {
    let mut out: Vec<LabeledSpan> = chosen
        .into_iter()
        .map(|c| LabeledSpan::new(c.start, c.end, m.labels()[c.label].clone()))
        .collect();
    out.sort();
    out
}
