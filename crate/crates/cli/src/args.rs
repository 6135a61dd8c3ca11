use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use refrank_core::eval::Gain;
use refrank_core::strategies::StrategyName;

#[derive(Debug, Parser)]
#[command(
    name = "refrank",
    version,
    about = "Reference-anchored LLM reranking harness"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rerank a first-stage run with one strategy.
    Rerank(RerankArgs),
    /// Sweep reference index, top-k selection and ensemble size.
    Analyze(AnalyzeArgs),
    /// NDCG@k of an existing run file.
    Eval(EvalArgs),
    /// Call counts and wall time of several strategies on the same inputs.
    Bench(BenchArgs),
    /// Write a seeded synthetic run, corpus, query set and qrels.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// First-stage TREC run file.
    #[arg(long)]
    pub run: PathBuf,
    /// JSONL corpus with `id`, `contents` and optional `title`.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Tab-separated `qid<TAB>text` query file.
    #[arg(long)]
    pub queries: PathBuf,
    /// Candidates kept per query.
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    /// Leave corpus titles out of the passage text.
    #[arg(long)]
    pub no_title: bool,
}

#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    #[arg(long, default_value = "exp", value_parser = parse_gain)]
    pub gain: Gain,
    /// NDCG cutoff.
    #[arg(long, default_value_t = 10)]
    pub cutoff: usize,
}

fn parse_gain(s: &str) -> Result<Gain, String> {
    s.parse().map_err(|e: refrank_core::Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendKind {
    Oracle,
    Endpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LatentKind {
    Qrels,
    Synthetic,
}

#[derive(Debug, Clone, Args)]
pub struct BackendArgs {
    #[arg(long, value_enum, default_value = "oracle")]
    pub backend: BackendKind,
    /// Base URL of an OpenAI-compatible chat completions server.
    #[arg(long)]
    pub endpoint_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub api_key_env: String,
    /// Directory with pointwise.txt, triplet.txt, duel.txt and setwise.txt.
    #[arg(long)]
    pub template_dir: Option<PathBuf>,
    /// Required for the oracle backend and for random reference selection.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Queries processed at once.
    #[arg(long)]
    pub concurrency: Option<usize>,
    /// Where the oracle takes latent relevance from (default: qrels when given).
    #[arg(long, value_enum)]
    pub oracle_latent: Option<LatentKind>,
    /// Seed of the synthetic latents (default: --seed).
    #[arg(long)]
    pub oracle_latent_seed: Option<u64>,
    #[arg(long, default_value_t = 0.0)]
    pub oracle_sigma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub oracle_bias: f64,
    #[arg(long, default_value_t = 4.0)]
    pub oracle_beta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub oracle_position_bias: f64,
    #[arg(long, default_value_t = 0.0)]
    pub oracle_ref_slope: f64,
}

#[derive(Debug, Clone, Args)]
pub struct StrategyParams {
    /// Ensemble size for refrank-multiple.
    #[arg(long)]
    pub m: Option<usize>,
    /// Comma-separated ensemble weights (sum to 1).
    #[arg(long, value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Fixed reference at this first-stage rank.
    #[arg(long)]
    pub ref_index: Option<usize>,
    /// Random reference among the top k (needs --seed).
    #[arg(long)]
    pub ref_topk: Option<usize>,
    /// Score each triplet in both slot orders and average.
    #[arg(long)]
    pub swap_debias: bool,
    /// Depth of the sorted prefix for bubblesort and setwise.
    #[arg(long)]
    pub k: Option<usize>,
    /// Heap arity for setwise.
    #[arg(long)]
    pub children: Option<usize>,
    /// Score each unordered pair once in allpairs.
    #[arg(long)]
    pub half_matrix: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RerankArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Enables NDCG in the report.
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub strategy: StrategyName,
    #[command(flatten)]
    pub params: StrategyParams,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Overwrite existing output files.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Deepest reference rank swept.
    #[arg(long, default_value_t = 10)]
    pub depth_r: usize,
    /// Largest top-k for random reference selection (default: --depth-r).
    #[arg(long)]
    pub k: Option<usize>,
    /// Largest ensemble size swept.
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    /// Column name in the CSV output (default: run file stem).
    #[arg(long)]
    pub dataset: Option<String>,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Also write eval.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    /// Inputs; a synthetic fixture is generated from --seed when omitted.
    #[arg(long, requires_all = ["corpus", "queries"])]
    pub run: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    /// Queries in the generated fixture.
    #[arg(long, default_value_t = 10)]
    pub synth_queries: usize,
    /// Comma-separated strategy names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub strategy: Vec<StrategyName>,
    #[command(flatten)]
    pub params: StrategyParams,
    #[command(flatten)]
    pub backend: BackendArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 10)]
    pub num_queries: usize,
    #[arg(long, default_value_t = 100)]
    pub num_docs: usize,
    /// First-stage score noise around the latent relevance.
    #[arg(long, default_value_t = 0.3)]
    pub first_stage_noise: f64,
    #[arg(long)]
    pub force: bool,
}
