//! `evhop`: ingest, index, train, retrieve, fuse, grid-search and evaluate.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags or config), 2 on
//! data errors (unreadable or malformed inputs, failed runs).

mod commands;
mod config;
mod io;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{ScorerKind, SimilarityKind, StrategyKind};

/// A mistake in how the tool was invoked, as opposed to bad data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(
    name = "evhop",
    version,
    about = "Multi-hop dense sentence retrieval for claim verification"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct GlobalArgs {
    /// JSON run config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for commands that train or sample. Overrides `seed` in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Log progress to stderr (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Read corpus JSONL {id, text, lines} and write it back normalized.
    IngestCorpus(IngestCorpusArgs),
    /// Read claims JSONL {id, claim, label, evidence}, validate against a corpus.
    IngestClaims(IngestClaimsArgs),
    /// Build the BM25 sentence index (M3BM).
    BuildSparse(BuildSparseArgs),
    /// Embed every corpus sentence with a dual encoder (M3EB).
    BuildDense(BuildDenseArgs),
    /// Embed claim texts with the query side of a dual encoder (M3EB).
    Encode(EncodeArgs),
    /// Mine BM25 hard negatives and write contrastive training JSONL.
    SampleNegatives(SampleNegativesArgs),
    /// Train the dual encoder on a mixed-objective schedule (M3EW).
    Train(TrainArgs),
    /// Write reranker training pairs JSONL {query, sentence, label}.
    BuildRerankerData(BuildRerankerDataArgs),
    /// Train the linear pair scorer (M3PS).
    TrainReranker(TrainRerankerArgs),
    /// Single-hop retrieve and rerank; writes ranked evidence JSONL.
    Retrieve(RetrieveArgs),
    /// Iterative retrieve and rerank; writes one run record per claim.
    Multihop(MultihopArgs),
    /// Fuse multi-hop run records into ranked evidence JSONL.
    Fuse(FuseArgs),
    /// Pick (mth, gamma) maximizing sentence recall@k over stored runs.
    GridSearch(GridSearchArgs),
    /// Score ranked evidence and predictions against gold claims.
    Evaluate(EvaluateArgs),
    /// Write a seeded synthetic corpus, claims and gold predictions.
    GenerateFixture(GenerateFixtureArgs),
}

#[derive(Args, Debug)]
pub struct IngestCorpusArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Keep text exactly as read instead of NFC-normalizing it.
    #[arg(long)]
    pub no_normalize: bool,
    /// Skip records with an empty id instead of failing.
    #[arg(long)]
    pub skip_empty_ids: bool,
}

#[derive(Args, Debug)]
pub struct IngestClaimsArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Corpus to resolve evidence against; unresolved sets are dropped and reported.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Validation report JSON.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BuildSparseArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k1: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
}

#[derive(Args, Debug)]
pub struct BuildDenseArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Dual encoder weights (M3EW).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub claims: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SampleNegativesArgs {
    #[arg(long)]
    pub claims: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// BM25 index (M3BM).
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub similarity: Option<SimilarityKind>,
    /// Pair scorer (M3PS) for `--similarity reranker`.
    #[arg(long)]
    pub scorer_model: Option<PathBuf>,
    #[arg(long)]
    pub pool: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub keep: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Contrastive records, the DPR-tagged dataset.
    #[arg(long)]
    pub contrastive: Option<PathBuf>,
    /// Multitask records with labels, the FEVER-tagged dataset.
    #[arg(long)]
    pub multitask: Option<PathBuf>,
    /// Start from these weights instead of a fresh random encoder.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Multitask-to-contrastive epoch ratio: N, N/M or inf.
    #[arg(long)]
    pub ratio: Option<String>,
    #[arg(long)]
    pub cycles: Option<u32>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Use only each example's own positive and negatives in the denominator.
    #[arg(long)]
    pub no_in_batch: bool,
    #[arg(long)]
    pub feature_dim: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
}

#[derive(Args, Debug)]
pub struct BuildRerankerDataArgs {
    #[arg(long)]
    pub claims: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Ranked evidence JSONL the NEI pairs are drawn from.
    #[arg(long)]
    pub retrievals: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub pool: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainRerankerArgs {
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub feature_dim: Option<usize>,
}

/// Inputs shared by `retrieve` and `multihop`.
#[derive(Args, Debug)]
pub struct RetrievalInputs {
    #[arg(long)]
    pub claims: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// BM25 index (M3BM), needed for sparse hops.
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Dual encoder weights (M3EW), needed for dense hops.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Sentence embeddings (M3EB), needed for dense hops.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Use this retriever on every hop.
    #[arg(long, value_enum)]
    pub retriever: Option<RetrieverArg>,
    #[arg(long, value_enum)]
    pub scorer: Option<ScorerKind>,
    /// M3PS file for `--scorer linear`, logits JSONL for `--scorer logits`.
    #[arg(long)]
    pub scorer_model: Option<PathBuf>,
    /// Retrieval depth for every hop.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub rerank_depth: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub inputs: RetrievalInputs,
    /// Evidence kept per claim.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct MultihopArgs {
    #[command(flatten)]
    pub inputs: RetrievalInputs,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub fanout: Option<usize>,
    #[arg(long)]
    pub max_hops: Option<usize>,
    #[arg(long)]
    pub mth: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FuseArgs {
    /// Run records written by `multihop`.
    #[arg(long)]
    pub runs: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyKind>,
    #[arg(long)]
    pub mth: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub factor: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct GridSearchArgs {
    #[arg(long)]
    pub runs: Option<PathBuf>,
    #[arg(long)]
    pub claims: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Comma-separated mth values.
    #[arg(long, value_delimiter = ',')]
    pub mths: Option<Vec<f64>>,
    /// Comma-separated gamma values.
    #[arg(long, value_delimiter = ',')]
    pub gammas: Option<Vec<f64>>,
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub claims: Option<PathBuf>,
    /// Ranked evidence JSONL {claim_id, evidence}.
    #[arg(long)]
    pub evidence: Option<PathBuf>,
    /// Predictions JSONL {claim_id, label}.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Metrics report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Count a claim as multi-hop when any gold set spans two documents.
    #[arg(long)]
    pub any_multihop: bool,
}

#[derive(Args, Debug)]
pub struct GenerateFixtureArgs {
    /// Directory receiving corpus.jsonl, claims.jsonl and predictions.jsonl.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Size preset; the config's `synthetic` section is used when absent.
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// 40 documents, 200 sentences.
    Fixture,
    /// 200 documents, 1000 sentences.
    Planted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum RetrieverArg {
    Dense,
    Sparse,
}

impl From<RetrieverArg> for evhop::pipeline::RetrieverKind {
    fn from(r: RetrieverArg) -> Self {
        match r {
            RetrieverArg::Dense => Self::Dense,
            RetrieverArg::Sparse => Self::Sparse,
        }
    }
}

struct StderrLogger;

static LOGGER: StderrLogger = StderrLogger;

impl log::Log for StderrLogger {
    fn enabled(&self, m: &log::Metadata<'_>) -> bool {
        m.level() <= log::max_level()
    }

    fn log(&self, r: &log::Record<'_>) {
        if self.enabled(r.metadata()) {
            eprintln!("[{}] {}", r.level(), r.args());
        }
    }

    fn flush(&self) {}
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    if log::set_logger(&LOGGER).is_ok() {
        log::set_max_level(level);
    }
}

fn is_usage(err: &anyhow::Error) -> bool {
    err.chain().any(|c| {
        c.downcast_ref::<UsageError>().is_some()
            || matches!(
                c.downcast_ref::<evhop::Error>(),
                Some(evhop::Error::Config(_))
            )
    })
}

fn main() -> ExitCode {
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
    init_logging(cli.global.verbose);
    match commands::run(&cli.global, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(if is_usage(&err) { 1 } else { 2 })
        }
    }
}
