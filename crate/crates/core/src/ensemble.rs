//! Mixture-of-experts ensembling over frozen base models.
//!
//! Each base model contributes its span representations `h⁽ᵐ⁾_s`. They are
//! mixed with softmax weights `α = softmax(a)`, passed through a square
//! matrix `W_s` and scored against a fresh label matrix:
//!
//! ```text
//! h_s   = W_s · Σ_m α_m h⁽ᵐ⁾_s
//! score = W_moe[r] · h_s
//! ```
//!
//! `W_s` starts as the identity, `a` as zeros and `W_moe` as the average of
//! the base label matrices. Only these three tensors are trained.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Bound, Gradients, Graph, NodeId, ParamId, ParamStore};
use crate::corpus::PredicateInstance;
use crate::decode::CoreLabelSet;
use crate::error::{Error, Result};
use crate::features::WordSource;
use crate::metrics::PrfResult;
use crate::model::{check_layout, SpanScorer, SrlModel};
use crate::optim::{l2_penalty, Adam};
use crate::spanscore::{build_targets, loss_graph, ScoreMatrix, Target};
use crate::tensor::{self, Tensor};
use crate::train::{check_labels, evaluate_scorer, word_matrices, EpochStats};

#[derive(Clone, Debug)]
pub struct EnsembleModel {
    bases: Vec<SrlModel>,
    params: ParamStore,
    combine: ParamId,
    output: ParamId,
    logits: ParamId,
}

impl EnsembleModel {
    /// Ensemble at its initial point.
    pub fn new(bases: Vec<SrlModel>) -> Result<Self> {
        check_compatible(&bases)?;
        let m = bases.len();
        let width = 2 * bases[0].dims().hidden;
        let mut output = bases[0].label_weights().clone();
        for b in &bases[1..] {
            output.add_assign(b.label_weights());
        }
        let output = output.map(|x| x * (1.0 / m as f64));
        let mut params = ParamStore::new();
        let combine = params.add("moe.combine", Tensor::identity(width));
        let output = params.add("moe.labels", output);
        let logits = params.add("moe.logits", Tensor::zeros(&[m]));
        Ok(EnsembleModel {
            bases,
            params,
            combine,
            output,
            logits,
        })
    }

    /// Ensemble with stored parameters.
    pub fn from_parts(bases: Vec<SrlModel>, params: ParamStore) -> Result<Self> {
        let mut model = Self::new(bases)?;
        check_layout(&model.params, &params)?;
        model.params = params;
        Ok(model)
    }

    pub fn bases(&self) -> &[SrlModel] {
        &self.bases
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// `W_s`.
    pub fn combine_weights(&self) -> &Tensor {
        self.params.get(self.combine)
    }

    /// `W_moe`.
    pub fn label_weights(&self) -> &Tensor {
        self.params.get(self.output)
    }

    pub fn mixture_logits(&self) -> &Tensor {
        self.params.get(self.logits)
    }

    /// `α = softmax(a)`.
    pub fn mixture(&self) -> Vec<f64> {
        tensor::softmax(self.mixture_logits().data())
    }

    /// Span representations `[|S|, 2d]` of every base, in inference mode.
    pub fn base_reps(&self, words: &Tensor, predicate: usize) -> Result<Vec<Tensor>> {
        self.bases
            .iter()
            .map(|b| b.span_reps(words, predicate))
            .collect()
    }

    /// Records `[R, |S|]` ensemble scores from precomputed base span
    /// representations.
    pub fn scores_graph<'a>(&self, g: &mut Graph<'a>, bound: &Bound, reps: &'a [Tensor]) -> NodeId {
        let nodes: Vec<NodeId> = reps.iter().map(|r| g.constant_ref(r)).collect();
        let alpha = g.softmax(bound.get(self.logits));
        let mixed = g.weighted_sum(&nodes, alpha);
        let h = g.matmul_t(mixed, bound.get(self.combine));
        g.matmul_t(bound.get(self.output), h)
    }

    pub fn score_reps(&self, reps: &[Tensor], len: usize) -> Result<ScoreMatrix> {
        let mut g = Graph::new();
        let bound = g.bind(&self.params, false);
        let scores = self.scores_graph(&mut g, &bound, reps);
        ScoreMatrix::new(self.labels().to_vec(), len, g.value(scores).clone())
    }
}

impl SpanScorer for EnsembleModel {
    fn labels(&self) -> &[String] {
        self.bases[0].labels()
    }

    fn core(&self) -> &CoreLabelSet {
        self.bases[0].core()
    }

    fn score(&self, words: &Tensor, predicate: usize) -> Result<ScoreMatrix> {
        let reps = self.base_reps(words, predicate)?;
        self.score_reps(&reps, words.rows())
    }
}

/// Bases must agree on labels, core set and every layer size.
pub fn check_compatible(bases: &[SrlModel]) -> Result<()> {
    let first = bases
        .first()
        .ok_or_else(|| Error::Incompatible("an ensemble needs at least one base model".into()))?;
    for (k, b) in bases.iter().enumerate().skip(1) {
        if b.labels() != first.labels() {
            return Err(Error::Incompatible(format!("base {k} has a different label set")));
        }
        if b.core() != first.core() {
            return Err(Error::Incompatible(format!("base {k} has a different core label set")));
        }
        if b.dims() != first.dims() {
            return Err(Error::Incompatible(format!(
                "base {k} has dimensions {:?}, expected {:?}",
                b.dims(),
                first.dims()
            )));
        }
    }
    Ok(())
}

/// `W_s · Σ_m softmax(a)_m · reps[m]` for one span.
pub fn combine_span_reps(reps: &[&[f64]], logits: &[f64], combine: &Tensor) -> Result<Vec<f64>> {
    if reps.is_empty() || reps.len() != logits.len() {
        return Err(Error::contract(format!(
            "{} span representations for {} mixture weights",
            reps.len(),
            logits.len()
        )));
    }
    let width = reps[0].len();
    if reps.iter().any(|r| r.len() != width) || combine.shape() != [width, width] {
        return Err(Error::contract("span representation widths disagree"));
    }
    let alpha = tensor::softmax(logits);
    let mut mixed = vec![0.0; width];
    for (r, a) in reps.iter().zip(&alpha) {
        for (m, x) in mixed.iter_mut().zip(*r) {
            *m += a * x;
        }
    }
    Ok(combine.matmul(&Tensor::vector(mixed)).into_data())
}

/// `W_moe[r] · h`.
pub fn ensemble_score(h: &[f64], label: &str, labels: &[String], weights: &Tensor) -> Result<f64> {
    let r = labels
        .iter()
        .position(|l| l == label)
        .ok_or_else(|| Error::contract(format!("unknown label {label}")))?;
    if weights.cols() != h.len() {
        return Err(Error::contract("span representation width disagrees with label matrix"));
    }
    Ok(tensor::dot(weights.row(r), h))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl EnsembleConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            lr: 0.0001,
            batch_size: 8,
            epochs: 20,
            l2: 0.0,
            seed: 0,
        }
    }
}

pub struct EnsembleOutcome {
    pub model: EnsembleModel,
    /// Dev F1 before any update.
    pub initial_dev_f1: Option<f64>,
    pub best_dev_f1: Option<f64>,
    /// 0 when the initial parameters were never beaten.
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

struct Cached {
    reps: Vec<Tensor>,
    targets: Vec<Target>,
}

/// Trains the mixing parameters on `train`, keeping the best state on
/// `dev` (the initial state included). Base span representations are
/// computed once up front.
pub fn train_ensemble(
    model: EnsembleModel,
    config: &EnsembleConfig,
    source: &WordSource,
    train: &[PredicateInstance],
    dev: &[PredicateInstance],
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<EnsembleOutcome> {
    if config.batch_size == 0 || config.lr.is_nan() || config.lr <= 0.0 || config.l2.is_nan() || config.l2 < 0.0 {
        return Err(Error::Config("invalid ensemble training settings".into()));
    }
    check_labels(model.labels(), train)?;
    check_labels(model.labels(), dev)?;
    let words = word_matrices(source, train)?;
    let cache: Vec<Cached> = train
        .iter()
        .zip(&words)
        .map(|(inst, w)| {
            Ok(Cached {
                reps: model.base_reps(w, inst.predicate)?,
                targets: build_targets(inst.gold_spans(), inst.predicate, inst.len(), model.labels())?,
            })
        })
        .collect::<Result<_>>()?;

    let dev_f1 = |m: &EnsembleModel| -> Result<Option<PrfResult>> {
        if dev.is_empty() {
            Ok(None)
        } else {
            evaluate_scorer(m, source, dev).map(Some)
        }
    };
    let initial = dev_f1(&model)?;
    let mut best = (initial.map_or(f64::NEG_INFINITY, |p| p.f1), 0, model.params.clone());
    let mut model = model;
    let mut adam = Adam::new(&model.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..cache.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut grads = Gradients::default();
            {
                let mut g = Graph::new();
                let bound = g.bind(&model.params, true);
                let mut loss = None;
                for &k in batch {
                    let scores = model.scores_graph(&mut g, &bound, &cache[k].reps);
                    let l = loss_graph(&mut g, scores, &cache[k].targets);
                    loss = Some(match loss {
                        Some(acc) => g.add(acc, l),
                        None => l,
                    });
                }
                let mut loss = loss.expect("non-empty batch");
                if config.l2 > 0.0 {
                    let pen = l2_penalty(&mut g, bound.nodes(), config.l2);
                    loss = g.add(loss, pen);
                }
                let value = g.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!("ensemble loss {value} in epoch {epoch}")));
                }
                total += value;
                grads.merge(g.backward(loss)?);
            }
            adam.step(&mut model.params, &grads, config.lr)?;
        }
        let dev_prf = dev_f1(&model)?;
        let stats = EpochStats {
            epoch,
            lr: config.lr,
            train_loss: total,
            dev: dev_prf,
        };
        on_epoch(&stats);
        let f1 = dev_prf.map_or(f64::NEG_INFINITY, |p| p.f1);
        if f1 > best.0 || dev.is_empty() {
            best = (f1, epoch, model.params.clone());
        }
        history.push(stats);
    }
    let (f1, best_epoch, params) = best;
    model.params = params;
    Ok(EnsembleOutcome {
        model,
        initial_dev_f1: initial.map(|p| p.f1),
        best_dev_f1: (!dev.is_empty()).then_some(f1),
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DecodeMode, ModelDims};
    use rand::Rng;

    fn base(seed: u64) -> SrlModel {
        let labels: Vec<String> = ["A0", "A1", "TMP"].iter().map(|s| s.to_string()).collect();
        let dims = ModelDims {
            word_dim: 3,
            mark_dim: 2,
            hidden: 4,
            layers: 2,
        };
        SrlModel::new(&labels, CoreLabelSet::default(), dims, seed).unwrap()
    }

    fn words(len: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(len, 3, (0..len * 3).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn single_base_is_reproduced_exactly() {
        let b = base(1);
        let e = EnsembleModel::new(vec![b.clone()]).unwrap();
        assert_eq!(e.mixture(), vec![1.0]);
        for seed in 0..5 {
            let w = words(6, seed);
            assert_eq!(e.score(&w, 3).unwrap(), b.score(&w, 3).unwrap());
            assert_eq!(
                e.predict(&w, 3, DecodeMode::Greedy).unwrap(),
                b.predict(&w, 3, DecodeMode::Greedy).unwrap()
            );
        }
    }

    #[test]
    fn identical_bases_match_the_shared_base() {
        let b = base(2);
        let e = EnsembleModel::new(vec![b.clone(), b.clone(), b.clone()]).unwrap();
        assert_eq!(e.mixture(), vec![1.0 / 3.0; 3]);
        let w = words(5, 1);
        let (x, y) = (e.score(&w, 2).unwrap(), b.score(&w, 2).unwrap());
        for (a, b) in x.values().data().iter().zip(y.values().data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn label_matrix_starts_as_row_average() {
        let bases = vec![base(1), base(2)];
        let e = EnsembleModel::new(bases.clone()).unwrap();
        let w = e.label_weights();
        for r in 0..3 {
            for c in 0..8 {
                let avg = 0.5 * (bases[0].label_weights().get(r, c) + bases[1].label_weights().get(r, c));
                assert!((w.get(r, c) - avg).abs() < 1e-15);
            }
        }
        assert_eq!(e.combine_weights(), &Tensor::identity(8));
    }

    #[test]
    fn combine_helpers() {
        let h = [1.0, -2.0, 0.5];
        let id = Tensor::identity(3);
        assert_eq!(combine_span_reps(&[&h], &[0.0], &id).unwrap(), h.to_vec());
        let mixed = combine_span_reps(&[&h, &h], &[3.0, -1.0], &id).unwrap();
        for (a, b) in mixed.iter().zip(&h) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(combine_span_reps(&[&h, &[1.0][..]], &[0.0, 0.0], &id).is_err());
        let labels = vec!["A0".to_string(), "A1".to_string()];
        let w = Tensor::matrix(2, 3, vec![1.0, 0.0, 0.0, 0.0, 1.0, 2.0]);
        assert_eq!(ensemble_score(&h, "A1", &labels, &w).unwrap(), -1.0);
        assert!(ensemble_score(&h, "A9", &labels, &w).is_err());
    }

    #[test]
    fn incompatible_bases_are_rejected() {
        let labels: Vec<String> = vec!["A0".into()];
        let dims = ModelDims {
            word_dim: 3,
            mark_dim: 2,
            hidden: 5,
            layers: 2,
        };
        let other = SrlModel::new(&labels, CoreLabelSet::default(), dims, 0).unwrap();
        assert!(EnsembleModel::new(vec![base(1), other]).is_err());
        assert!(EnsembleModel::new(vec![]).is_err());
    }
}
