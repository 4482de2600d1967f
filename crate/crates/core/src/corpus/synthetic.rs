//! Seeded synthetic corpora with positional argument structure.
//!
//! Sentences follow the template
//!
//! ```text
//! [filler] [core₁] PRED [core₂] [cue core₃ …] [cue adjunct]*
//! ```
//!
//! The first core label sits immediately left of the predicate, the second
//! immediately right. Remaining core labels and all adjuncts start with a
//! label-specific cue word, and adjunct phrases close the sentence. Every
//! boundary is visible from word classes, so the corpus is learnable.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledSpan, PredicateInstance};
use crate::error::{Error, Result};
use crate::features::EmbeddingTable;
use crate::tensor::Tensor;

const PREDICATE_WORDS: usize = 4;
const FILLER_WORDS: usize = 2;
const CUES_PER_LABEL: usize = 2;
const MIN_CONTENT_WORDS: usize = 4;
const MAX_PHRASE: usize = 3;
const MAX_ADJUNCTS: usize = 2;
const MAX_ATTEMPTS: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub vocab_size: usize,
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub core_labels: Vec<String>,
    pub adjunct_labels: Vec<String>,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            vocab_size: 50,
            sentences: 100,
            min_len: 5,
            max_len: 12,
            core_labels: vec!["A0".into(), "A1".into(), "A2".into()],
            adjunct_labels: vec!["TMP".into(), "LOC".into()],
            seed: 1,
        }
    }
}

struct Vocab {
    predicates: Vec<String>,
    fillers: Vec<String>,
    /// Cue words per cue-marked label, indexed like `cued_labels`.
    cues: Vec<Vec<String>>,
    content: Vec<String>,
}

fn word(k: usize) -> String {
    format!("w{k}")
}

/// The token inventory used by [`gen_synthetic`] for `vocab_size`.
pub fn synthetic_vocab(vocab_size: usize) -> Vec<String> {
    (0..vocab_size).map(word).collect()
}

impl SyntheticConfig {
    fn cued_labels(&self) -> Vec<&str> {
        self.core_labels
            .iter()
            .skip(2)
            .chain(&self.adjunct_labels)
            .map(String::as_str)
            .collect()
    }

    fn check(&self) -> Result<()> {
        if self.core_labels.is_empty() || self.adjunct_labels.is_empty() {
            return Err(Error::Config(
                "synthetic labels need at least one core and one adjunct label".into(),
            ));
        }
        if self.sentences == 0 || self.min_len == 0 || self.max_len == 0 {
            return Err(Error::Config("synthetic sizes must be positive".into()));
        }
        let reserved = PREDICATE_WORDS + FILLER_WORDS + CUES_PER_LABEL * self.cued_labels().len();
        if self.vocab_size < reserved + MIN_CONTENT_WORDS {
            return Err(Error::Config(format!(
                "vocabulary of {} is too small; need at least {}",
                self.vocab_size,
                reserved + MIN_CONTENT_WORDS
            )));
        }
        let extra_cores = self.core_labels.len().saturating_sub(2);
        let longest =
            1 + 1 + MAX_PHRASE * self.core_labels.len().min(2) + MAX_PHRASE * (extra_cores + MAX_ADJUNCTS);
        if self.min_len > self.max_len || self.max_len < 2 || self.min_len > longest {
            return Err(Error::Config(format!(
                "length range {}..={} cannot hold a predicate with arguments (feasible 2..={longest})",
                self.min_len, self.max_len
            )));
        }
        Ok(())
    }

    fn vocab(&self) -> Vocab {
        let mut next = 0;
        let mut take = |n: usize| -> Vec<String> {
            let words = (next..next + n).map(word).collect();
            next += n;
            words
        };
        let predicates = take(PREDICATE_WORDS);
        let fillers = take(FILLER_WORDS);
        let cues = self
            .cued_labels()
            .iter()
            .map(|_| take(CUES_PER_LABEL))
            .collect();
        let content = (next..self.vocab_size).map(word).collect();
        Vocab {
            predicates,
            fillers,
            cues,
            content,
        }
    }
}

/// Generates `config.sentences` single-predicate instances.
pub fn gen_synthetic(config: &SyntheticConfig) -> Result<Vec<PredicateInstance>> {
    config.check()?;
    let vocab = config.vocab();
    let cued = config.cued_labels();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::with_capacity(config.sentences);

    for n in 0..config.sentences {
        let mut attempts = 0;
        let inst = loop {
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(Error::Config(format!(
                    "could not generate a sentence of length {}..={}",
                    config.min_len, config.max_len
                )));
            }
            let (tokens, predicate, spans) = sample_sentence(config, &vocab, &cued, &mut rng);
            if spans.is_empty() || tokens.len() < config.min_len || tokens.len() > config.max_len {
                continue;
            }
            break PredicateInstance {
                id: format!("syn{}-{}", config.seed, n + 1),
                tokens,
                predicate,
                gold: Some(spans),
            };
        };
        out.push(inst);
    }
    Ok(out)
}

fn phrase<R: Rng>(rng: &mut R, content: &[String], min: usize, max: usize) -> Vec<String> {
    let n = rng.random_range(min..=max);
    (0..n).map(|_| content.choose(rng).unwrap().clone()).collect()
}

fn sample_sentence<R: Rng>(
    config: &SyntheticConfig,
    vocab: &Vocab,
    cued: &[&str],
    rng: &mut R,
) -> (Vec<String>, usize, Vec<LabeledSpan>) {
    let mut tokens: Vec<String> = Vec::new();
    let mut spans = Vec::new();
    let mut push = |tokens: &mut Vec<String>, words: Vec<String>, label: &str| {
        let start = tokens.len() + 1;
        tokens.extend(words);
        spans.push(LabeledSpan::new(start, tokens.len(), label));
    };

    if rng.random_bool(0.3) {
        tokens.push(vocab.fillers.choose(rng).unwrap().clone());
    }
    if rng.random_bool(0.8) {
        let words = phrase(rng, &vocab.content, 1, MAX_PHRASE);
        push(&mut tokens, words, &config.core_labels[0]);
    }
    tokens.push(vocab.predicates.choose(rng).unwrap().clone());
    let predicate = tokens.len();
    if config.core_labels.len() > 1 && rng.random_bool(0.8) {
        let words = phrase(rng, &vocab.content, 1, MAX_PHRASE);
        push(&mut tokens, words, &config.core_labels[1]);
    }
    let cued_phrase = |rng: &mut R, k: usize| {
        let mut words = vec![vocab.cues[k].choose(rng).unwrap().clone()];
        words.extend(phrase(rng, &vocab.content, 0, MAX_PHRASE - 1));
        words
    };
    let extra_cores = config.core_labels.len().saturating_sub(2);
    for (k, label) in cued.iter().enumerate().take(extra_cores) {
        if rng.random_bool(0.35) {
            let words = cued_phrase(rng, k);
            push(&mut tokens, words, label);
        }
    }
    let adjuncts = match rng.random_range(0..10) {
        0..=3 => 0,
        4..=7 => 1,
        _ => MAX_ADJUNCTS,
    };
    for _ in 0..adjuncts {
        let k = extra_cores + rng.random_range(0..config.adjunct_labels.len());
        let words = cued_phrase(rng, k);
        push(&mut tokens, words, cued[k]);
    }
    (tokens, predicate, spans)
}

/// Random fixed word vectors for the synthetic vocabulary.
pub fn synthetic_embeddings(vocab_size: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (dim as f64).sqrt();
    let data: Vec<f64> = (0..vocab_size * dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    EmbeddingTable::new(synthetic_vocab(vocab_size), Tensor::matrix(vocab_size, dim, data))
        .expect("distinct synthetic words")
}
