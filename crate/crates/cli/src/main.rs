//! `codesearch`: preprocessing, training, evaluation and retrieval from the
//! command line.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use codesearch::codefeat::Language;
use codesearch::evalret::Side;
use codesearch::losses::LossKind;
use codesearch::models::{Arch, EvalLayer, Fusion};

#[derive(Parser, Debug)]
#[command(name = "codesearch", version, about = "Siamese-network semantic code search")]
pub struct Cli {
    /// Worker threads for encoding and evaluation. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Extract method names, API sequences and code tokens.
    Preprocess(PreprocessArgs),
    /// Build the four per-field vocabularies.
    Vocab(VocabArgs),
    /// Split a corpus into train/valid/test files.
    Split(SplitArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Retrieval MRR on a held-out corpus.
    Eval(EvalArgs),
    /// Embed a code corpus into a searchable index.
    Index(IndexArgs),
    /// Search an index with a natural-language query.
    Query(QueryArgs),
    /// Write embeddings as a tab-separated file.
    ExportEmb(ExportArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LangArg {
    Java,
    Sql,
    Generic,
}

impl From<LangArg> for Language {
    fn from(l: LangArg) -> Self {
        match l {
            LangArg::Java => Language::Java,
            LangArg::Sql => Language::Sql,
            LangArg::Generic => Language::Generic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ArchArg {
    #[value(name = "bil_m", alias = "bil-m")]
    BilM,
    #[value(name = "bil_a", alias = "bil-a")]
    BilA,
    #[value(name = "bil_cs", alias = "bil-cs")]
    BilCs,
    Dcs,
}

impl From<ArchArg> for Arch {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::BilM => Arch::BilM,
            ArchArg::BilA => Arch::BilA,
            ArchArg::BilCs => Arch::BilCs,
            ArchArg::Dcs => Arch::Dcs,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum LossArg {
    Contrastive,
    Triplet,
    CosineContrastive,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Contrastive => LossKind::Contrastive,
            LossArg::Triplet => LossKind::Triplet,
            LossArg::CosineContrastive => LossKind::CosineContrastive,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FusionArg {
    MaxPool,
    ConcatDense,
}

impl From<FusionArg> for Fusion {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::MaxPool => Fusion::MaxPool,
            FusionArg::ConcatDense => Fusion::ConcatDense,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LayerArg {
    Extraction,
    Siamese,
    Both,
}

impl LayerArg {
    pub fn layers(self) -> Vec<EvalLayer> {
        match self {
            LayerArg::Extraction => vec![EvalLayer::Extraction],
            LayerArg::Siamese => vec![EvalLayer::Siamese],
            LayerArg::Both => vec![EvalLayer::Extraction, EvalLayer::Siamese],
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SingleLayerArg {
    Extraction,
    Siamese,
}

impl From<SingleLayerArg> for EvalLayer {
    fn from(l: SingleLayerArg) -> Self {
        match l {
            SingleLayerArg::Extraction => EvalLayer::Extraction,
            SingleLayerArg::Siamese => EvalLayer::Siamese,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SideArg {
    Code,
    Text,
}

impl From<SideArg> for Side {
    fn from(s: SideArg) -> Self {
        match s {
            SideArg::Code => Side::Code,
            SideArg::Text => Side::Text,
        }
    }
}

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub lang: LangArg,
    #[arg(long)]
    pub output: PathBuf,
    /// Replace the built-in keyword list with one word per line.
    #[arg(long)]
    pub keywords: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VocabArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub min_freq: usize,
    #[arg(long, default_value_t = 10_000)]
    pub max_size: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Train, valid and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub ratios: Vec<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for train.jsonl, valid.jsonl and test.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Validation corpus; without it a seeded 10% of the corpus is held out.
    #[arg(long)]
    pub valid: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dcs")]
    pub arch: ArchArg,
    #[arg(long, default_value_t = 200)]
    pub semb: usize,
    #[arg(long, value_enum, default_value = "cosine-contrastive")]
    pub loss: LossArg,
    /// Defaults to the loss's own margin.
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long, default_value_t = 32, value_parser = clap::value_parser!(u64).range(2..))]
    pub batch_size: u64,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 40)]
    pub patience: usize,
    #[arg(long, default_value_t = 4)]
    pub max_halvings: u32,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub validate_every: u64,
    #[arg(long, default_value_t = 50)]
    pub val_pool_size: usize,
    #[arg(long, value_enum, default_value = "extraction")]
    pub val_layer: SingleLayerArg,
    #[arg(long, default_value_t = 100)]
    pub embed_dim: usize,
    /// LSTM hidden size per direction; defaults to 400 for dcs, 200 otherwise.
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, value_enum, default_value = "max-pool")]
    pub fusion: FusionArg,
    /// Source language, used to reject bil_m on SQL corpora.
    #[arg(long, value_enum)]
    pub lang: Option<LangArg>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Output directory for checkpoints, log and manifest.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub pool_size: usize,
    #[arg(long, value_enum, default_value = "extraction")]
    pub layer: LayerArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the reports as JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IndexArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "extraction")]
    pub layer: SingleLayerArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct QueryArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub text: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Corpus the index was built from, for snippet previews.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "code")]
    pub side: SideArg,
    #[arg(long, value_enum, default_value = "siamese")]
    pub layer: SingleLayerArg,
    /// Append two PCA coordinates per row.
    #[arg(long)]
    pub pca2: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 2000)]
    pub records: usize,
    #[arg(long, default_value_t = 100)]
    pub concepts: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Errors caused by the invocation rather than by the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<codesearch::Error>() {
        Some(codesearch::Error::InvalidArgument(_) | codesearch::Error::BatchTooSmall(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    if cli.threads == 0 {
        eprintln!("error: --threads must be at least 1");
        return ExitCode::from(2);
    }
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(1);
    }

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
