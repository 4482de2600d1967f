mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spansrl::DecodeMode;

#[derive(Parser, Debug)]
#[command(name = "spansrl", version, about = "Span-selection semantic role labeler")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a model and save the checkpoint with the best dev F1.
    Train(TrainArgs),
    /// Label a corpus with a trained model or ensemble.
    Predict(PredictArgs),
    /// Score predictions against gold spans.
    Evaluate(EvaluateArgs),
    /// Train a mixture-of-experts ensemble over frozen base models.
    Ensemble(EnsembleArgs),
    /// Nearest-neighbour span analysis and label vector dump.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic corpus and matching word vectors.
    GenData(GenDataArgs),
    /// Convert CoNLL-2005 bracket columns to JSON lines (or back).
    ConvertConll(ConvertArgs),
}

#[derive(Args, Debug, Clone)]
pub struct WordArgs {
    /// Word embedding text file (`token v1 … vd` per line).
    #[arg(long, conflicts_with = "contextual")]
    pub embeddings: Option<PathBuf>,
    /// Contextual vectors, JSON lines of `{"id", "vectors"}`.
    #[arg(long)]
    pub contextual: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[command(flatten)]
    pub words: WordArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Mode {
    Greedy,
    Argmax,
}

impl From<Mode> for DecodeMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Greedy => DecodeMode::Greedy,
            Mode::Argmax => DecodeMode::Argmax,
        }
    }
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    pub checkpoint: PathBuf,
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "greedy")]
    pub mode: Mode,
    #[command(flatten)]
    pub words: WordArgs,
    /// Also write CoNLL bracket columns here.
    #[arg(long)]
    pub conll: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    pub pred: PathBuf,
    pub gold: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Confusion matrix CSV path (defaults to the report path with a
    /// `.confusion.csv` suffix).
    #[arg(long)]
    pub confusion: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EnsembleArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub bases: Vec<PathBuf>,
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[command(flatten)]
    pub words: WordArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    pub checkpoint: PathBuf,
    pub query: PathBuf,
    pub reference: PathBuf,
    #[arg(long, default_value_t = spansrl::analyze::DEFAULT_K)]
    pub k: usize,
    /// JSON report path.
    #[arg(long)]
    pub out: PathBuf,
    /// Label vector CSV path (defaults to the report path with a
    /// `.labels.csv` suffix).
    #[arg(long)]
    pub labels_csv: Option<PathBuf>,
    #[command(flatten)]
    pub words: WordArgs,
}

#[derive(Args, Debug)]
pub struct GenDataArgs {
    /// Corpus output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Word vector output path.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub sentences: usize,
    #[arg(long, default_value_t = 50)]
    pub vocab: usize,
    #[arg(long, default_value_t = 5)]
    pub min_len: usize,
    #[arg(long, default_value_t = 12)]
    pub max_len: usize,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    /// Seed for the word vectors; keep it fixed across train and dev sets.
    #[arg(long, default_value_t = 1)]
    pub embedding_seed: u64,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Sentence id prefix for converted instances.
    #[arg(long, default_value = "s")]
    pub prefix: String,
    /// Convert JSON lines to bracket columns instead.
    #[arg(long)]
    pub reverse: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Ensemble(a) => commands::ensemble(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::GenData(a) => commands::gen_data(a),
        Command::ConvertConll(a) => commands::convert_conll(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
