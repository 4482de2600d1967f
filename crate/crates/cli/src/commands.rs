use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use spansrl::analyze::{label_vectors_csv, nearest_neighbors};
use spansrl::checkpoint::{file_hash, save_base, BaseCheckpoint, Checkpoint, EnsembleCheckpoint};
use spansrl::corpus::{
    gen_synthetic, parse_jsonl, parse_jsonl_with, parse_predictions, read_conll, synthetic_embeddings,
    write_conll, write_jsonl, SyntheticConfig,
};
use spansrl::ensemble::{train_ensemble, EnsembleConfig, EnsembleModel};
use spansrl::features::{load_pretrained, ContextualVectors, WordSource};
use spansrl::metrics::evaluate_instances;
use spansrl::model::SpanScorer;
use spansrl::train::{check_labels, fit_with, predict_corpus, TrainConfig};
use spansrl::{CoreLabelSet, DecodeMode, Error};

use crate::{AnalyzeArgs, ConvertArgs, EnsembleArgs, EvaluateArgs, GenDataArgs, PredictArgs, TrainArgs, WordArgs};

pub enum Failure {
    Usage(String),
    Data(Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(Error::NonFinite(_)) => 3,
            Failure::Data(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "{m}"),
            Failure::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.into())
    }
}

type CmdResult = Result<(), Failure>;

struct Words {
    source: WordSource,
    path: PathBuf,
    contextual: bool,
}

/// Word vectors from the flags, or else from the reference stored in a
/// checkpoint.
fn word_source(args: &WordArgs, stored: Option<(&Path, bool)>) -> Result<Words, Failure> {
    let (path, contextual) = match (&args.embeddings, &args.contextual, stored) {
        (Some(p), None, _) => (p.clone(), false),
        (None, Some(p), _) => (p.clone(), true),
        (None, None, Some((p, c))) => (p.to_path_buf(), c),
        (None, None, None) => {
            return Err(Failure::Usage(
                "word vectors required: pass --embeddings or --contextual".into(),
            ))
        }
        (Some(_), Some(_), _) => {
            return Err(Failure::Usage("--embeddings and --contextual are exclusive".into()))
        }
    };
    let source = if contextual {
        WordSource::Contextual(ContextualVectors::load(&path)?)
    } else {
        WordSource::Static(load_pretrained(&path)?)
    };
    let path = fs::canonicalize(&path).unwrap_or(path);
    Ok(Words {
        source,
        path,
        contextual,
    })
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text)?;
    Ok(())
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn train(a: TrainArgs) -> CmdResult {
    let mut config = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(h) = a.hidden {
        config.hidden = h;
    }
    if let Some(l) = a.layers {
        config.layers = l;
    }
    if let Some(b) = a.batch_size {
        config.batch_size = b;
    }
    config.validate()?;
    let words = word_source(&a.words, None)?;
    let core = config.core_set();
    let train = parse_jsonl_with(&a.train, &core)?;
    let dev = match &a.dev {
        Some(p) => parse_jsonl_with(p, &core)?,
        None => Vec::new(),
    };
    let out = fit_with(config.clone(), &words.source, &train, &dev, |s| {
        println!("{}", s.log_line());
    })?;
    let mut ckpt = BaseCheckpoint::new(&out.model, config);
    ckpt.best_dev_f1 = out.best_dev_f1;
    ckpt.best_epoch = out.best_epoch;
    ckpt.embeddings = Some(words.path);
    ckpt.contextual = words.contextual;
    save_base(&a.out, &ckpt)?;
    match out.best_dev_f1 {
        Some(f1) => println!("best_epoch={} best_dev_f1={f1:.4}", out.best_epoch),
        None => println!("best_epoch={}", out.best_epoch),
    }
    Ok(())
}

fn run_predict<S: SpanScorer>(scorer: &S, source: &WordSource, a: &PredictArgs) -> CmdResult {
    let corpus = parse_jsonl_with(&a.corpus, scorer.core())?;
    let preds = predict_corpus(scorer, source, &corpus, DecodeMode::from(a.mode))?;
    write_jsonl(&a.out, &preds)?;
    if let Some(path) = &a.conll {
        let mut w = BufWriter::new(File::create(path)?);
        write_conll(&mut w, &preds)?;
        w.flush()?;
    }
    Ok(())
}

pub fn predict(a: PredictArgs) -> CmdResult {
    match Checkpoint::load(&a.checkpoint)? {
        Checkpoint::Base(b) => {
            let words = word_source(&a.words, b.embeddings.as_deref().map(|p| (p, b.contextual)))?;
            run_predict(&b.model()?, &words.source, &a)
        }
        Checkpoint::Ensemble(e) => {
            let (model, bases) = e.model(&a.checkpoint)?;
            let first = &bases[0];
            let words = word_source(&a.words, first.embeddings.as_deref().map(|p| (p, first.contextual)))?;
            run_predict(&model, &words.source, &a)
        }
    }
}

pub fn evaluate(a: EvaluateArgs) -> CmdResult {
    let pred = parse_predictions(&a.pred)?;
    let gold = parse_jsonl(&a.gold)?;
    let report = evaluate_instances(&pred, &gold)?;
    print!("{}", report.to_table());
    if let Some(out) = &a.out {
        write_text(out, &serde_json::to_string_pretty(&report)?)?;
    }
    let confusion = a
        .confusion
        .clone()
        .or_else(|| a.out.as_ref().map(|o| with_suffix(o, ".confusion.csv")));
    if let Some(path) = confusion {
        write_text(&path, &report.confusion.to_csv())?;
    }
    Ok(())
}

/// Stores `base` relative to the ensemble's directory when it lives there.
fn stored_base_path(base: &Path, ensemble_out: &Path) -> PathBuf {
    let base = fs::canonicalize(base).unwrap_or_else(|_| base.to_path_buf());
    let dir = ensemble_out
        .parent()
        .map(|d| if d.as_os_str().is_empty() { Path::new(".") } else { d })
        .and_then(|d| fs::canonicalize(d).ok());
    match dir.and_then(|d| base.strip_prefix(d).ok().map(Path::to_path_buf)) {
        Some(rel) => rel,
        None => base,
    }
}

pub fn ensemble(a: EnsembleArgs) -> CmdResult {
    let mut config = match &a.config {
        Some(p) => EnsembleConfig::from_toml_str(&fs::read_to_string(p)?)?,
        None => EnsembleConfig::default(),
    };
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    let mut models = Vec::with_capacity(a.bases.len());
    let mut ckpts = Vec::with_capacity(a.bases.len());
    let mut hashes = Vec::with_capacity(a.bases.len());
    for path in &a.bases {
        hashes.push(file_hash(path)?);
        let ckpt = spansrl::checkpoint::load_base(path)?;
        models.push(ckpt.model()?);
        ckpts.push(ckpt);
    }
    let first = &ckpts[0];
    let words = word_source(&a.words, first.embeddings.as_deref().map(|p| (p, first.contextual)))?;
    let model = EnsembleModel::new(models)?;
    let train = parse_jsonl_with(&a.train, model.core())?;
    let dev = match &a.dev {
        Some(p) => parse_jsonl_with(p, model.core())?,
        None => Vec::new(),
    };
    let out = train_ensemble(model, &config, &words.source, &train, &dev, |s| {
        println!("{}", s.log_line());
    })?;
    let stored: Vec<PathBuf> = a.bases.iter().map(|b| stored_base_path(b, &a.out)).collect();
    let mut ckpt = EnsembleCheckpoint::new(&out.model, config, &stored, hashes);
    ckpt.best_dev_f1 = out.best_dev_f1;
    ckpt.best_epoch = out.best_epoch;
    Checkpoint::Ensemble(ckpt).save(&a.out)?;
    match (out.initial_dev_f1, out.best_dev_f1) {
        (Some(init), Some(best)) => println!(
            "initial_dev_f1={init:.4} best_epoch={} best_dev_f1={best:.4}",
            out.best_epoch
        ),
        _ => println!("best_epoch={}", out.best_epoch),
    }
    Ok(())
}

pub fn analyze(a: AnalyzeArgs) -> CmdResult {
    let ckpt = match Checkpoint::load(&a.checkpoint)? {
        Checkpoint::Base(b) => b,
        Checkpoint::Ensemble(_) => {
            return Err(Failure::Data(Error::Incompatible(
                "analysis needs a base model checkpoint".into(),
            )))
        }
    };
    if a.k == 0 {
        return Err(Failure::Usage("--k must be positive".into()));
    }
    let model = ckpt.model()?;
    let words = word_source(&a.words, ckpt.embeddings.as_deref().map(|p| (p, ckpt.contextual)))?;
    let query = parse_jsonl_with(&a.query, model.core())?;
    let reference = parse_jsonl_with(&a.reference, model.core())?;
    check_labels(model.labels(), &reference)?;
    let results = nearest_neighbors(&model, &words.source, &query, &reference, a.k)?;
    write_text(&a.out, &serde_json::to_string_pretty(&results)?)?;
    let csv = a
        .labels_csv
        .clone()
        .unwrap_or_else(|| with_suffix(&a.out, ".labels.csv"));
    write_text(&csv, &label_vectors_csv(model.labels(), model.label_weights()))?;
    Ok(())
}

pub fn gen_data(a: GenDataArgs) -> CmdResult {
    let config = SyntheticConfig {
        vocab_size: a.vocab,
        sentences: a.sentences,
        min_len: a.min_len,
        max_len: a.max_len,
        seed: a.seed,
        ..SyntheticConfig::default()
    };
    let corpus = gen_synthetic(&config)?;
    write_jsonl(&a.out, &corpus)?;
    if let Some(path) = &a.embeddings {
        if a.dim == 0 {
            return Err(Failure::Usage("--dim must be positive".into()));
        }
        synthetic_embeddings(a.vocab, a.dim, a.embedding_seed).write(path)?;
    }
    Ok(())
}

pub fn convert_conll(a: ConvertArgs) -> CmdResult {
    let core = CoreLabelSet::default();
    if a.reverse {
        let corpus = parse_jsonl_with(&a.input, &core)?;
        let mut w = BufWriter::new(File::create(&a.out)?);
        write_conll(&mut w, &corpus)?;
        w.flush()?;
    } else {
        let reader = BufReader::new(File::open(&a.input)?);
        let corpus = read_conll(reader, &a.input, &a.prefix, &core)?;
        write_jsonl(&a.out, &corpus)?;
    }
    Ok(())
}
