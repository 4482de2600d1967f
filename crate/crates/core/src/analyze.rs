//! Inspection tools: nearest-neighbour spans and label vector dumps.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{InstanceKey, LabeledSpan, PredicateInstance};
use crate::decode::span_index;
use crate::error::Result;
use crate::features::WordSource;
use crate::model::{DecodeMode, SpanScorer, SrlModel};
use crate::tensor::{dot, Tensor};

pub const DEFAULT_K: usize = 10;

/// Cosine similarity; 0 when either vector is all zeros.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Indices of the `k` rows of `refs` most similar to `query`, best first.
/// Ties keep reference order.
pub fn nearest(query: &[f64], refs: &[Vec<f64>], k: usize) -> Vec<(usize, f64)> {
    let mut sims: Vec<(usize, f64)> = refs.iter().map(|r| cosine(query, r)).enumerate().collect();
    sims.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    sims.truncate(k);
    sims
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub instance: InstanceKey,
    pub span: LabeledSpan,
    pub text: String,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanNeighbors {
    pub instance: InstanceKey,
    /// A predicted span of the query instance.
    pub span: LabeledSpan,
    pub text: String,
    /// Reference gold spans, most similar first.
    pub neighbors: Vec<Neighbor>,
}

struct RefSpan<'a> {
    inst: &'a PredicateInstance,
    span: &'a LabeledSpan,
}

fn span_text(inst: &PredicateInstance, s: &LabeledSpan) -> String {
    inst.tokens[s.start - 1..s.end].join(" ")
}

/// For each predicted span in `query`, the `k` most similar gold spans in
/// `reference` under the model's span representations.
pub fn nearest_neighbors(
    model: &SrlModel,
    source: &WordSource,
    query: &[PredicateInstance],
    reference: &[PredicateInstance],
    k: usize,
) -> Result<Vec<SpanNeighbors>> {
    let mut refs = Vec::new();
    let mut vecs = Vec::new();
    for inst in reference {
        if inst.gold_spans().is_empty() {
            continue;
        }
        let reps = model.span_reps(&source.sentence_matrix(inst)?, inst.predicate)?;
        for s in inst.gold_spans() {
            vecs.push(reps.row(span_index(s.start, s.end, inst.len())).to_vec());
            refs.push(RefSpan { inst, span: s });
        }
    }
    let mut warned = false;
    let mut out = Vec::new();
    for inst in query {
        let words = source.sentence_matrix(inst)?;
        let reps = model.span_reps(&words, inst.predicate)?;
        let predicted = model.predict(&words, inst.predicate, DecodeMode::Greedy)?;
        for s in predicted {
            if k > vecs.len() && !warned {
                log::warn!(
                    "k = {k} exceeds the {} reference spans; lists are truncated",
                    vecs.len()
                );
                warned = true;
            }
            let q = reps.row(span_index(s.start, s.end, inst.len()));
            let neighbors = nearest(q, &vecs, k)
                .into_iter()
                .map(|(idx, sim)| Neighbor {
                    instance: refs[idx].inst.key(),
                    span: refs[idx].span.clone(),
                    text: span_text(refs[idx].inst, refs[idx].span),
                    similarity: sim,
                })
                .collect();
            out.push(SpanNeighbors {
                instance: inst.key(),
                text: span_text(inst, &s),
                span: s,
                neighbors,
            });
        }
    }
    Ok(out)
}

/// Label matrix rows as CSV: `label,v1,…,vd`.
pub fn label_vectors_csv(labels: &[String], weights: &Tensor) -> String {
    let mut out = String::from("label");
    for c in 0..weights.cols() {
        let _ = write!(out, ",v{}", c + 1);
    }
    out.push('\n');
    for (r, label) in labels.iter().enumerate() {
        out.push_str(label);
        for v in weights.row(r) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
