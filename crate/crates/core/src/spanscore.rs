//! Span features, per-label span scores, the per-label softmax over
//! spans, and the negative log-likelihood training loss.

use crate::autodiff::{Graph, NodeId};
use crate::corpus::LabeledSpan;
use crate::decode::{enumerate_spans, num_spans, span_index};
use crate::error::{Error, Result};
use crate::tensor::{self, Tensor};

/// Scores for every (label, span) pair of one predicate instance.
/// Rows are labels, columns are spans in canonical order.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    labels: Vec<String>,
    len: usize,
    values: Tensor,
}

impl ScoreMatrix {
    pub fn new(labels: Vec<String>, len: usize, values: Tensor) -> Result<Self> {
        if len < 1 {
            return Err(Error::contract("score matrix for an empty sentence"));
        }
        if values.shape() != [labels.len(), num_spans(len)] {
            return Err(Error::contract(format!(
                "score matrix shape {:?}, expected [{}, {}]",
                values.shape(),
                labels.len(),
                num_spans(len)
            )));
        }
        Ok(ScoreMatrix {
            labels,
            len,
            values,
        })
    }

    /// Sentence length `T`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn num_labels(&self) -> usize {
        self.labels.len()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn spans(&self) -> Vec<(usize, usize)> {
        enumerate_spans(self.len).expect("len >= 1")
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    /// Score of label row `label` at canonical span position `span`.
    pub fn value(&self, label: usize, span: usize) -> f64 {
        self.values.get(label, span)
    }

    /// Score of `label` on the 1-based span `(i, j)`.
    pub fn score(&self, label: usize, i: usize, j: usize) -> f64 {
        self.value(label, span_index(i, j, self.len))
    }
}

/// `[h_i + h_j ; h_i − h_j]` for the 1-based span `(i, j)` of `hidden: [T, d]`.
pub fn span_representation(hidden: &Tensor, i: usize, j: usize) -> Result<Vec<f64>> {
    let len = hidden.rows();
    if i < 1 || i > j || j > len {
        return Err(Error::contract(format!(
            "span ({i}, {j}) invalid for sentence length {len}"
        )));
    }
    let (hi, hj) = (hidden.row(i - 1), hidden.row(j - 1));
    let mut out: Vec<f64> = hi.iter().zip(hj).map(|(a, b)| a + b).collect();
    out.extend(hi.iter().zip(hj).map(|(a, b)| a - b));
    Ok(out)
}

/// Scores `W[r] · h_(i,j)` for all spans and labels.
pub fn score_matrix(hidden: &Tensor, weights: &Tensor, labels: &[String]) -> Result<ScoreMatrix> {
    let len = hidden.rows();
    if weights.shape() != [labels.len(), 2 * hidden.cols()] {
        return Err(Error::contract(format!(
            "label matrix shape {:?} incompatible with {} labels and hidden width {}",
            weights.shape(),
            labels.len(),
            hidden.cols()
        )));
    }
    let spans = crate::autodiff::span_feature_matrix(hidden);
    ScoreMatrix::new(labels.to_vec(), len, weights.matmul_t(&spans))
}

/// `log P(i, j | r)` for every span in canonical order.
pub fn span_log_softmax(m: &ScoreMatrix, label: &str) -> Result<Vec<f64>> {
    let r = m
        .label_index(label)
        .ok_or_else(|| Error::contract(format!("unknown label {label}")))?;
    let row = m.values().row(r);
    let lse = tensor::log_sum_exp(row);
    Ok(row.iter().map(|&f| f - lse).collect())
}

/// A training target: label row and canonical span position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Target {
    pub label: usize,
    pub span: usize,
}

/// Gold spans plus the null span `(p, p)` for every label with no gold span.
pub fn build_targets(
    gold: &[LabeledSpan],
    predicate: usize,
    len: usize,
    labels: &[String],
) -> Result<Vec<Target>> {
    if predicate < 1 || predicate > len {
        return Err(Error::contract(format!(
            "predicate {predicate} outside sentence of length {len}"
        )));
    }
    let mut targets = Vec::new();
    let mut has_gold = vec![false; labels.len()];
    for s in gold {
        let label = labels
            .iter()
            .position(|l| *l == s.label)
            .ok_or_else(|| Error::contract(format!("label {} not in label set", s.label)))?;
        if s.start < 1 || s.start > s.end || s.end > len {
            return Err(Error::contract(format!(
                "target span ({}, {}) outside sentence of length {len}",
                s.start, s.end
            )));
        }
        has_gold[label] = true;
        targets.push(Target {
            label,
            span: span_index(s.start, s.end, len),
        });
    }
    let null = span_index(predicate, predicate, len);
    for (label, _) in has_gold.iter().enumerate().filter(|(_, g)| !**g) {
        targets.push(Target { label, span: null });
    }
    targets.sort();
    Ok(targets)
}

/// `−Σ log P(i, j | r)` over the targets.
pub fn sample_loss(m: &ScoreMatrix, targets: &[Target]) -> Result<f64> {
    let cols = num_spans(m.len());
    let lse: Vec<f64> = (0..m.num_labels())
        .map(|r| tensor::log_sum_exp(m.values().row(r)))
        .collect();
    let mut loss = 0.0;
    for t in targets {
        if t.label >= m.num_labels() || t.span >= cols {
            return Err(Error::contract(format!("target {t:?} outside score matrix")));
        }
        loss += lse[t.label] - m.value(t.label, t.span);
    }
    Ok(loss)
}

/// Records span scores `[R, |S|]` from hidden states `[T, d]` and the
/// label matrix `[R, 2d]`. Returns the span feature node and the scores.
pub fn score_graph(g: &mut Graph<'_>, hidden: NodeId, weights: NodeId) -> (NodeId, NodeId) {
    let spans = g.span_features(hidden);
    let scores = g.matmul_t(weights, spans);
    (spans, scores)
}

/// Records the sample loss over a `[R, |S|]` score node.
pub fn loss_graph(g: &mut Graph<'_>, scores: NodeId, targets: &[Target]) -> NodeId {
    let cols = g.value(scores).cols();
    let lse = g.row_log_sum_exp(scores);
    let picked = g.gather(scores, targets.iter().map(|t| t.label * cols + t.span).collect());
    let norms = g.gather(lse, targets.iter().map(|t| t.label).collect());
    let a = g.sum(norms);
    let b = g.sum(picked);
    g.sub(a, b)
}
