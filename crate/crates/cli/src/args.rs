use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use concept_geometry::concepts::DEFAULT_BASELINE_SAMPLES;
use concept_geometry::intervene::DEFAULT_TOP_K;
use concept_geometry::metric::{MetricKind, DEFAULT_RIDGE_REL};

#[derive(Debug, Parser)]
#[command(
    name = "concept-geometry",
    version,
    about = "Concept directions, the causal inner product, probing and steering for softmax models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate concept directions, leave-one-out projections and the random-pair baseline.
    Estimate(EstimateArgs),
    /// Pairwise |inner product| tables for all concepts under both metrics, plus an SVG.
    Heatmap(HeatmapArgs),
    /// Score labeled contexts with every concept direction and report AUCs.
    Probe(ProbeArgs),
    /// Steer contexts along concept directions: logit trajectories and top-k tokens.
    Intervene(InterveneArgs),
    /// Build a synthetic model and check the pipeline against its planted truth.
    SynthVerify(SynthVerifyArgs),
    /// Build a synthetic model and write it out as toolkit input files.
    SynthExport(SynthExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Causal,
    Euclidean,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Causal => MetricKind::Causal,
            MetricArg::Euclidean => MetricKind::Euclidean,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Unembedding matrix file (kind 0).
    #[arg(long)]
    pub unembeddings: PathBuf,
    /// Concept pair file.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Ridge added to the covariance, relative to its mean eigenvalue.
    #[arg(long, default_value_t = DEFAULT_RIDGE_REL)]
    pub ridge: f64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random pairs drawn per concept for the baseline.
    #[arg(long, default_value_t = DEFAULT_BASELINE_SAMPLES)]
    pub baseline_samples: usize,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Metric rendered in heatmap.svg; both CSV tables are always written.
    #[arg(long, value_enum, default_value_t = MetricArg::Causal)]
    pub metric: MetricArg,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Context embeddings (kind 1).
    #[arg(long)]
    pub contexts: PathBuf,
    /// One label per context row.
    #[arg(long)]
    pub labels: PathBuf,
}

#[derive(Debug, Args)]
pub struct InterveneArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Context embeddings (kind 1).
    #[arg(long)]
    pub contexts: PathBuf,
    /// Optional context labels. Contexts labeled `<W>|<Z>` are used only for that quadruple.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Quadruple file.
    #[arg(long)]
    pub quads: PathBuf,
    /// `start:step:stop` or a comma-separated list.
    #[arg(long, default_value = "0:0.05:0.4")]
    pub alphas: String,
    /// Tokens listed per context and α in topk.csv.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 16)]
    pub d: usize,
    #[arg(long, default_value_t = 4)]
    pub k_concepts: usize,
    /// Tokens per concept-value cell (word families).
    #[arg(long, default_value_t = 16)]
    pub per_cell: usize,
    /// Per-token noise on the non-concept coordinates.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthVerifyArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[arg(long, default_value_t = DEFAULT_RIDGE_REL)]
    pub ridge: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthExportArgs {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[arg(long)]
    pub out: PathBuf,
}
