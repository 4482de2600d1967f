//! The span labeling model: mark embedding, encoder stack and label matrix.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Graph, NodeId, ParamId, ParamStore};
use crate::corpus::LabeledSpan;
use crate::decode::{argmax_decode, greedy_select, CoreLabelSet};
use crate::encoder::{encode, EncoderStack};
use crate::error::{Error, Result};
use crate::features::mark_row;
use crate::init::glorot_uniform;
use crate::spanscore::{build_targets, loss_graph, score_graph, ScoreMatrix};
use crate::tensor::Tensor;

/// Layer sizes of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub word_dim: usize,
    pub mark_dim: usize,
    pub hidden: usize,
    pub layers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Argmax,
}

/// Dropout settings for a training forward pass.
pub struct Dropout<'r, R: Rng + ?Sized> {
    pub lstm: f64,
    pub words: f64,
    pub rng: &'r mut R,
}

/// Graph nodes produced by [`SrlModel::forward`].
pub struct Forward {
    /// Base features `[T, d]`.
    pub hidden: NodeId,
    /// Span representations `[|S|, 2d]`.
    pub spans: NodeId,
    /// Scores `[R, |S|]`.
    pub scores: NodeId,
}

#[derive(Clone, Debug)]
pub struct SrlModel {
    labels: Vec<String>,
    core: CoreLabelSet,
    dims: ModelDims,
    params: ParamStore,
    mark: ParamId,
    encoder: EncoderStack,
    label_weights: ParamId,
}

impl SrlModel {
    /// Freshly initialized model. Labels are stored sorted.
    pub fn new(labels: &[String], core: CoreLabelSet, dims: ModelDims, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init(labels, core, dims, &mut rng)
    }

    pub fn init<R: Rng + ?Sized>(
        labels: &[String],
        core: CoreLabelSet,
        dims: ModelDims,
        rng: &mut R,
    ) -> Result<Self> {
        let mut labels = labels.to_vec();
        labels.sort();
        labels.dedup();
        if labels.is_empty() {
            return Err(Error::Config("empty label set".into()));
        }
        if dims.word_dim == 0 || dims.mark_dim == 0 {
            return Err(Error::Config("embedding widths must be positive".into()));
        }
        let mut params = ParamStore::new();
        let mark = params.add("mark", glorot_uniform(2, dims.mark_dim, rng));
        let encoder = EncoderStack::init(
            &mut params,
            dims.word_dim + dims.mark_dim,
            dims.hidden,
            dims.layers,
            rng,
        )?;
        let label_weights = params.add(
            "labels",
            glorot_uniform(labels.len(), 2 * dims.hidden, rng),
        );
        Ok(SrlModel {
            labels,
            core,
            dims,
            params,
            mark,
            encoder,
            label_weights,
        })
    }

    /// Rebuilds a model around stored parameters. Names and shapes must
    /// match the layout implied by `dims` and `labels`.
    pub fn from_parts(
        labels: &[String],
        core: CoreLabelSet,
        dims: ModelDims,
        params: ParamStore,
    ) -> Result<Self> {
        let mut model = Self::new(labels, core, dims, 0)?;
        if model.labels != labels {
            return Err(Error::Incompatible("stored labels are not sorted and unique".into()));
        }
        check_layout(&model.params, &params)?;
        model.params = params;
        Ok(model)
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn mark_id(&self) -> ParamId {
        self.mark
    }

    pub fn label_weights_id(&self) -> ParamId {
        self.label_weights
    }

    /// The label matrix `W`, one row per label.
    pub fn label_weights(&self) -> &Tensor {
        self.params.get(self.label_weights)
    }

    /// Records the forward pass for one instance. `words` is `[T, d_word]`;
    /// `bound` must come from binding this model's parameters.
    pub fn forward<'a, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'a>,
        bound: &Bound,
        words: &'a Tensor,
        predicate: usize,
        dropout: Option<Dropout<'_, R>>,
    ) -> Result<Forward> {
        let len = words.rows();
        if words.shape().len() != 2 || words.cols() != self.dims.word_dim {
            return Err(Error::Incompatible(format!(
                "word vectors of shape {:?}, model expects width {}",
                words.shape(),
                self.dims.word_dim
            )));
        }
        if predicate < 1 || predicate > len {
            return Err(Error::contract(format!(
                "predicate {predicate} outside sentence of length {len}"
            )));
        }
        let table = g.constant_ref(words);
        let marks = bound.get(self.mark);
        let (word_ratio, lstm_ratio, mut rng) = match dropout {
            Some(d) => (d.words, d.lstm, Some(d.rng)),
            None => (0.0, 0.0, None),
        };
        let mut inputs = Vec::with_capacity(len);
        for t in 1..=len {
            let mut w = g.row_select(table, t - 1);
            if let Some(r) = rng.as_mut() {
                w = g.dropout(w, word_ratio, &mut **r);
            }
            let m = g.row_select(marks, mark_row(t, predicate));
            inputs.push(g.concat(&[w, m]));
        }
        let drop = rng.map(|r| (lstm_ratio, r));
        let enc = encode(g, bound, &self.encoder, &inputs, drop)?;
        let hidden = g.stack(&enc.outputs);
        let (spans, scores) = score_graph(g, hidden, bound.get(self.label_weights));
        Ok(Forward {
            hidden,
            spans,
            scores,
        })
    }

    /// Training loss for one instance with gold spans.
    pub fn loss<'a, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<'a>,
        bound: &Bound,
        words: &'a Tensor,
        predicate: usize,
        gold: &[LabeledSpan],
        dropout: Option<Dropout<'_, R>>,
    ) -> Result<NodeId> {
        let targets = build_targets(gold, predicate, words.rows(), &self.labels)?;
        let fwd = self.forward(g, bound, words, predicate, dropout)?;
        Ok(loss_graph(g, fwd.scores, &targets))
    }

    /// Inference-mode span representations `[|S|, 2d]` and scores.
    pub fn infer(&self, words: &Tensor, predicate: usize) -> Result<(Tensor, ScoreMatrix)> {
        let mut g = Graph::new();
        let bound = g.bind(&self.params, false);
        let fwd = self.forward::<ChaCha8Rng>(&mut g, &bound, words, predicate, None)?;
        let spans = g.value(fwd.spans).clone();
        let scores = ScoreMatrix::new(self.labels.clone(), words.rows(), g.value(fwd.scores).clone())?;
        Ok((spans, scores))
    }

    pub fn span_reps(&self, words: &Tensor, predicate: usize) -> Result<Tensor> {
        Ok(self.infer(words, predicate)?.0)
    }

}

/// Anything that produces a score matrix for an instance.
pub trait SpanScorer {
    fn labels(&self) -> &[String];
    fn core(&self) -> &CoreLabelSet;
    fn score(&self, words: &Tensor, predicate: usize) -> Result<ScoreMatrix>;

    fn predict(&self, words: &Tensor, predicate: usize, mode: DecodeMode) -> Result<Vec<LabeledSpan>> {
        let m = self.score(words, predicate)?;
        decode_scores(&m, predicate, self.core(), mode)
    }
}

impl SpanScorer for SrlModel {
    fn labels(&self) -> &[String] {
        &self.labels
    }

    fn core(&self) -> &CoreLabelSet {
        &self.core
    }

    fn score(&self, words: &Tensor, predicate: usize) -> Result<ScoreMatrix> {
        Ok(self.infer(words, predicate)?.1)
    }
}

pub fn decode_scores(
    m: &ScoreMatrix,
    predicate: usize,
    core: &CoreLabelSet,
    mode: DecodeMode,
) -> Result<Vec<LabeledSpan>> {
    match mode {
        DecodeMode::Greedy => greedy_select(m, predicate, core),
        DecodeMode::Argmax => argmax_decode(m, predicate),
    }
}

/// Checks that `found` has the same parameter names and shapes as `expected`.
pub fn check_layout(expected: &ParamStore, found: &ParamStore) -> Result<()> {
    if expected.len() != found.len() {
        return Err(Error::Incompatible(format!(
            "expected {} parameter tensors, found {}",
            expected.len(),
            found.len()
        )));
    }
    for ((_, name_a, a), (_, name_b, b)) in expected.iter().zip(found.iter()) {
        if name_a != name_b || a.shape() != b.shape() {
            return Err(Error::Incompatible(format!(
                "parameter {name_b} {:?} does not match {name_a} {:?}",
                b.shape(),
                a.shape()
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::assemble_inputs;
    use crate::model::SpanScorer;

    fn labels() -> Vec<String> {
        ["TMP", "A1", "A0"].iter().map(|s| s.to_string()).collect()
    }

    fn dims() -> ModelDims {
        ModelDims {
            word_dim: 3,
            mark_dim: 2,
            hidden: 4,
            layers: 2,
        }
    }

    fn words(len: usize) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        Tensor::matrix(len, 3, (0..len * 3).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn labels_sorted_and_shapes() {
        let m = SrlModel::new(&labels(), CoreLabelSet::default(), dims(), 1).unwrap();
        assert_eq!(m.labels(), &["A0", "A1", "TMP"]);
        assert_eq!(m.label_weights().shape(), &[3, 8]);
        let s = m.score(&words(4), 2).unwrap();
        assert_eq!(s.values().shape(), &[3, 10]);
        assert_eq!(m.span_reps(&words(4), 2).unwrap().shape(), &[10, 8]);
    }

    #[test]
    fn inference_is_pure() {
        let m = SrlModel::new(&labels(), CoreLabelSet::default(), dims(), 1).unwrap();
        let w = words(5);
        assert_eq!(m.score(&w, 3).unwrap(), m.score(&w, 3).unwrap());
    }

    #[test]
    fn same_seed_same_model() {
        let a = SrlModel::new(&labels(), CoreLabelSet::default(), dims(), 9).unwrap();
        let b = SrlModel::new(&labels(), CoreLabelSet::default(), dims(), 9).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn mark_rows_match_assembled_inputs() {
        let m = SrlModel::new(&labels(), CoreLabelSet::default(), dims(), 1).unwrap();
        let w = words(4);
        let x = assemble_inputs(&w, 2, m.params().get(m.mark_id())).unwrap();
        assert_eq!(x.shape(), &[4, 5]);
        assert_eq!(&x.row(1)[3..], m.params().get(m.mark_id()).row(1));
        assert_eq!(&x.row(0)[3..], m.params().get(m.mark_id()).row(0));
    }

    #[test]
    fn all_parameters_get_gradients() {
        let m = SrlModel::new(&labels(), CoreLabelSet::default(), dims(), 2).unwrap();
        let w = words(5);
        let gold = vec![LabeledSpan::new(1, 2, "A0"), LabeledSpan::new(4, 5, "TMP")];
        let mut g = Graph::new();
        let bound = g.bind(m.params(), true);
        let loss = m
            .loss::<ChaCha8Rng>(&mut g, &bound, &w, 3, &gold, None)
            .unwrap();
        let grads = g.backward(loss).unwrap();
        for (id, name, _) in m.params().iter() {
            let grad = grads.get(id).unwrap_or_else(|| panic!("no gradient for {name}"));
            assert!(grad.data().iter().any(|&x| x != 0.0), "zero gradient for {name}");
        }
    }

    #[test]
    fn wrong_word_width_is_rejected() {
        let m = SrlModel::new(&labels(), CoreLabelSet::default(), dims(), 1).unwrap();
        assert!(m.score(&Tensor::zeros(&[4, 2]), 1).is_err());
        assert!(m.score(&words(4), 5).is_err());
    }

    #[test]
    fn from_parts_checks_layout() {
        let m = SrlModel::new(&labels(), CoreLabelSet::default(), dims(), 1).unwrap();
        let back =
            SrlModel::from_parts(m.labels(), m.core().clone(), m.dims(), m.params().clone()).unwrap();
        assert_eq!(back.score(&words(3), 1).unwrap(), m.score(&words(3), 1).unwrap());
        let other = ModelDims { hidden: 5, ..dims() };
        assert!(SrlModel::from_parts(m.labels(), m.core().clone(), other, m.params().clone()).is_err());
    }
}
