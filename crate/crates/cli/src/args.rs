use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sizereg::coarsen::{Aggregation, CoarsenMethod};

#[derive(Debug, Parser)]
#[command(name = "sizereg", version, about = "Size-shift regularization experiments for graph classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse a TUDataset directory and report the size split.
    Prepare(PrepareArgs),
    /// Precompute coarsened copies of the training graphs.
    Coarsen(CoarsenArgs),
    /// Train one model per seed and append the run records.
    Train(TrainArgs),
    /// Aggregate test MCC per model with and without regularization.
    Report(ReportArgs),
    /// Compare representations of original and coarsened graphs.
    AnalyzeCka(CkaArgs),
    /// Test MCC for different sets of coarsening ratios.
    AblateRatios(ExperimentArgs),
    /// Test MCC for each coarsening method.
    AblateCoarsener(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    pub dataset_dir: PathBuf,
    pub name: String,
    /// Seed of the validation carve-out.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write `prepare-<name>.json` and a manifest here.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    #[value(name = "heavy-edge")]
    HeavyEdge,
    Sc,
    Kmeans,
}

impl From<MethodArg> for CoarsenMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::HeavyEdge => CoarsenMethod::HeavyEdge,
            MethodArg::Sc => CoarsenMethod::Spectral,
            MethodArg::Kmeans => CoarsenMethod::KMeans,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AggArg {
    Mean,
    Max,
    Sum,
}

impl From<AggArg> for Aggregation {
    fn from(a: AggArg) -> Self {
        match a {
            AggArg::Mean => Aggregation::Mean,
            AggArg::Max => Aggregation::Max,
            AggArg::Sum => Aggregation::Sum,
        }
    }
}

#[derive(Debug, Args)]
pub struct CoarsenArgs {
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    #[arg(long)]
    pub dataset: String,
    #[arg(long, value_delimiter = ',', default_value = "0.8,0.9")]
    pub ratios: Vec<f64>,
    #[arg(long, value_enum, default_value = "heavy-edge")]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value = "mean")]
    pub agg: AggArg,
    /// Seed of the partitioners.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the size split whose training graphs are coarsened.
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, default_value = "runs")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "runs")]
    pub out_dir: PathBuf,
    /// Overrides the configured seed list.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    /// Force λ = 0 regardless of the configuration.
    #[arg(long)]
    pub no_reg: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Format {
    Text,
    Csv,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, default_value = "runs/results.jsonl")]
    pub results: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GraphSet {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
pub struct CkaArgs {
    #[command(flatten)]
    pub experiment: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub ratios: Vec<f64>,
    /// Split whose graphs are compared.
    #[arg(long, value_enum, default_value = "test")]
    pub graphs: GraphSet,
}
