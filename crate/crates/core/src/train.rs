//! Minibatch training with Adam, step-decayed learning rate and best-dev
//! model selection.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, Graph};
use crate::corpus::{label_inventory, PredicateInstance};
use crate::decode::{CoreLabelSet, DEFAULT_CORE_LABELS};
use crate::error::{Error, Result};
use crate::features::WordSource;
use crate::metrics::{labeled_prf, span_sets, PrfResult};
use crate::model::{DecodeMode, Dropout, ModelDims, SpanScorer, SrlModel};
use crate::optim::{l2_penalty, step_decay_lr, Adam};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Expected word vector width; taken from the word source when unset.
    pub word_dim: Option<usize>,
    pub mark_dim: usize,
    pub layers: usize,
    pub hidden: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub l2: f64,
    pub dropout_lstm: f64,
    pub dropout_contextual: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs trained at the base learning rate.
    pub lr_hold: usize,
    /// The learning rate halves every `lr_period` epochs after the hold.
    pub lr_period: usize,
    pub core_labels: Vec<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            word_dim: None,
            mark_dim: 50,
            layers: 4,
            hidden: 300,
            batch_size: 32,
            lr: 0.001,
            l2: 0.0001,
            dropout_lstm: 0.1,
            dropout_contextual: 0.5,
            epochs: 100,
            seed: 0,
            lr_hold: 50,
            lr_period: 25,
            core_labels: DEFAULT_CORE_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("mark_dim", self.mark_dim),
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("batch_size", self.batch_size),
            ("epochs", self.epochs),
            ("lr_period", self.lr_period),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.word_dim == Some(0) {
            return Err(Error::Config("word_dim must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("lr must be positive".into()));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("l2 must be non-negative".into()));
        }
        for (name, r) in [
            ("dropout_lstm", self.dropout_lstm),
            ("dropout_contextual", self.dropout_contextual),
        ] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::Config(format!("{name} must be in [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn core_set(&self) -> CoreLabelSet {
        CoreLabelSet::new(self.core_labels.iter().map(String::as_str))
    }

    /// Learning rate for the 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        step_decay_lr(self.lr, epoch, self.lr_hold, self.lr_period)
    }
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub dev: Option<PrfResult>,
}

impl EpochStats {
    pub fn log_line(&self) -> String {
        let mut line = format!(
            "epoch={} lr={} loss={:.6}",
            self.epoch, self.lr, self.train_loss
        );
        if let Some(d) = &self.dev {
            line.push_str(&format!(
                " dev_p={:.4} dev_r={:.4} dev_f1={:.4}",
                d.precision, d.recall, d.f1
            ));
        }
        line
    }
}

/// Word matrices for a corpus, looked up once.
pub fn word_matrices(source: &WordSource, instances: &[PredicateInstance]) -> Result<Vec<Tensor>> {
    instances.iter().map(|inst| source.sentence_matrix(inst)).collect()
}

/// Fails if `instances` use a label the model does not know.
pub fn check_labels(labels: &[String], instances: &[PredicateInstance]) -> Result<()> {
    let unseen: Vec<String> = label_inventory(instances)
        .into_iter()
        .filter(|l| !labels.contains(l))
        .collect();
    if unseen.is_empty() {
        Ok(())
    } else {
        Err(Error::Incompatible(format!(
            "labels not seen in training: {}",
            unseen.join(", ")
        )))
    }
}

/// Copies of `instances` with `spans` replaced by the scorer's predictions.
pub fn predict_corpus<S: SpanScorer + ?Sized>(
    scorer: &S,
    source: &WordSource,
    instances: &[PredicateInstance],
    mode: DecodeMode,
) -> Result<Vec<PredicateInstance>> {
    instances
        .iter()
        .map(|inst| {
            let words = source.sentence_matrix(inst)?;
            let spans = scorer.predict(&words, inst.predicate, mode)?;
            Ok(PredicateInstance {
                gold: Some(spans),
                ..inst.clone()
            })
        })
        .collect()
}

/// Labeled P/R/F1 of greedy predictions against the gold spans.
pub fn evaluate_scorer<S: SpanScorer + ?Sized>(
    scorer: &S,
    source: &WordSource,
    instances: &[PredicateInstance],
) -> Result<PrfResult> {
    let pred = predict_corpus(scorer, source, instances, DecodeMode::Greedy)?;
    labeled_prf(&span_sets(&pred)?, &span_sets(instances)?)
}

/// Batches of indices with similar lengths, in random order.
pub fn length_batches<R: Rng + ?Sized>(lengths: &[usize], batch_size: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&k| lengths[k]);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    batches.shuffle(rng);
    batches
}

/// Training state for one model.
pub struct Trainer<'d> {
    model: SrlModel,
    config: TrainConfig,
    adam: Adam,
    rng: ChaCha8Rng,
    source: &'d WordSource,
    train: &'d [PredicateInstance],
    words: Vec<Tensor>,
    epoch: usize,
}

impl<'d> Trainer<'d> {
    pub fn new(config: TrainConfig, source: &'d WordSource, train: &'d [PredicateInstance]) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::Config("empty training corpus".into()));
        }
        if let Some(inst) = train.iter().find(|i| i.gold.is_none()) {
            return Err(Error::Incompatible(format!(
                "training instance {} has no spans",
                inst.key()
            )));
        }
        let word_dim = source.dim();
        if let Some(d) = config.word_dim {
            if d != word_dim {
                return Err(Error::Incompatible(format!(
                    "config expects {d}-dimensional word vectors, source has {word_dim}"
                )));
            }
        }
        let dims = ModelDims {
            word_dim,
            mark_dim: config.mark_dim,
            hidden: config.hidden,
            layers: config.layers,
        };
        let core = config.core_set();
        for inst in train {
            inst.validate(&core)
                .map_err(|m| Error::Incompatible(format!("{}: {m}", inst.key())))?;
        }
        let words = word_matrices(source, train)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = SrlModel::init(&label_inventory(train), core, dims, &mut rng)?;
        let adam = Adam::new(model.params());
        Ok(Trainer {
            model,
            config,
            adam,
            rng,
            source,
            train,
            words,
            epoch: 0,
        })
    }

    pub fn model(&self) -> &SrlModel {
        &self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    /// Number of completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn source(&self) -> &WordSource {
        self.source
    }

    /// One pass over the training data. Returns the summed loss
    /// (including the L2 term of every batch) and the learning rate used.
    pub fn run_epoch(&mut self) -> Result<(f64, f64)> {
        let epoch = self.epoch + 1;
        let lr = self.config.lr_at(epoch);
        let lengths: Vec<usize> = self.train.iter().map(PredicateInstance::len).collect();
        let batches = length_batches(&lengths, self.config.batch_size, &mut self.rng);
        let word_ratio = if self.source.is_contextual() {
            self.config.dropout_contextual
        } else {
            0.0
        };
        let mut total = 0.0;
        for batch in batches {
            let mut grads = Gradients::default();
            for k in batch {
                let inst = &self.train[k];
                let mut g = Graph::new();
                let bound = g.bind(self.model.params(), true);
                let dropout = Dropout {
                    lstm: self.config.dropout_lstm,
                    words: word_ratio,
                    rng: &mut self.rng,
                };
                let loss = self.model.loss(
                    &mut g,
                    &bound,
                    &self.words[k],
                    inst.predicate,
                    inst.gold_spans(),
                    Some(dropout),
                )?;
                let value = g.value(loss).item();
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss {value} on {} in epoch {epoch}",
                        inst.key()
                    )));
                }
                total += value;
                grads.merge(g.backward(loss)?);
            }
            if self.config.l2 > 0.0 {
                let mut g = Graph::new();
                let bound = g.bind(self.model.params(), true);
                let penalty = l2_penalty(&mut g, bound.nodes(), self.config.l2);
                total += g.value(penalty).item();
                grads.merge(g.backward(penalty)?);
            }
            if !grads.all_finite() {
                return Err(Error::NonFinite(format!("gradient in epoch {epoch}")));
            }
            self.adam.step(self.model.params_mut(), &grads, lr)?;
        }
        self.epoch = epoch;
        Ok((total, lr))
    }
}

/// Result of [`fit`].
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev F1 (the last epoch when
    /// there is no dev data).
    pub model: SrlModel,
    pub best_dev_f1: Option<f64>,
    pub best_epoch: usize,
    pub history: Vec<EpochStats>,
}

/// Trains for `config.epochs` epochs, keeping the best model on `dev`.
pub fn fit(
    config: TrainConfig,
    source: &WordSource,
    train: &[PredicateInstance],
    dev: &[PredicateInstance],
) -> Result<TrainOutcome> {
    fit_with(config, source, train, dev, |stats| log::info!("{}", stats.log_line()))
}

pub fn fit_with(
    config: TrainConfig,
    source: &WordSource,
    train: &[PredicateInstance],
    dev: &[PredicateInstance],
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    let epochs = config.epochs;
    let mut trainer = Trainer::new(config, source, train)?;
    check_labels(trainer.model().labels(), dev)?;
    let mut best: Option<(f64, usize, SrlModel)> = None;
    let mut history = Vec::with_capacity(epochs);
    for _ in 0..epochs {
        let (loss, lr) = trainer.run_epoch()?;
        let dev_prf = if dev.is_empty() {
            None
        } else {
            Some(evaluate_scorer(trainer.model(), source, dev)?)
        };
        let stats = EpochStats {
            epoch: trainer.epoch(),
            lr,
            train_loss: loss,
            dev: dev_prf,
        };
        on_epoch(&stats);
        let f1 = dev_prf.map_or(f64::NEG_INFINITY, |p| p.f1);
        if best.as_ref().is_none_or(|(b, _, _)| f1 > *b || dev.is_empty()) {
            best = Some((f1, stats.epoch, trainer.model().clone()));
        }
        history.push(stats);
    }
    let (f1, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best_dev_f1: (!dev.is_empty()).then_some(f1),
        best_epoch,
        history,
    })
}
