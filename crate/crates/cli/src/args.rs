use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use deepgs::{AffinityKind, Variant};

#[derive(Debug, Parser)]
#[command(
    name = "deepgs",
    version,
    about = "Drug-target binding affinity prediction with DeepGS"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model on all folds but `--fold` and checkpoint every epoch.
    Train(TrainArgs),
    /// Score a trained model on one split of a dataset.
    Evaluate(EvaluateArgs),
    /// Predict the affinity of one drug-protein pair.
    Predict(PredictArgs),
    /// Train DeepGS, DeepGS1 and DeepGS2 on the same split and compare them.
    Ablate(AblateArgs),
    /// Print the tokens and heavy-atom graph of a SMILES string.
    Inspect(InspectArgs),
    /// Finite-difference check of every layer and of the assembled network.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Davis,
    Kiba,
}

impl From<Kind> for AffinityKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Davis => AffinityKind::Davis,
            Kind::Kiba => AffinityKind::Kiba,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// `id<TAB>SMILES` per line.
    #[arg(long)]
    pub drugs: PathBuf,
    /// `id<TAB>sequence` per line.
    #[arg(long)]
    pub proteins: PathBuf,
    /// `drug_id<TAB>protein_id<TAB>value` per line (Kd in nM for Davis).
    #[arg(long)]
    pub affinities: PathBuf,
    #[arg(long, value_enum, default_value = "davis")]
    pub kind: Kind,
    /// Held-out fold.
    #[arg(long, default_value_t = 0)]
    pub fold: usize,
    #[arg(long, default_value_t = 6)]
    pub folds: usize,
    /// Root seed for the split, initialisation, shuffling and OOV vectors.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Flat `key = value` file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Maximum SMILES tokens.
    #[arg(long)]
    pub lds: Option<usize>,
    /// Maximum protein length before 3-gram splitting.
    #[arg(long)]
    pub lps: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Any configuration key, e.g. `--set lr=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Pre-trained SMILES token vectors (word2vec text format).
    #[arg(long)]
    pub smi2vec: Option<PathBuf>,
    /// Pre-trained protein 3-gram vectors (word2vec text format).
    #[arg(long)]
    pub prot2vec: Option<PathBuf>,
    /// Use an empty table (every token out of vocabulary) when a vector file is absent.
    #[arg(long)]
    pub allow_random_embeddings: bool,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue the run in `--out` from its last checkpoint.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Test,
    All,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// A `train --out` directory or a model bundle directory.
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value = "test")]
    pub split: Split,
    /// Also write `metrics.csv` here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub smiles: String,
    /// Protein amino-acid sequence.
    #[arg(long)]
    pub sequence: String,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub smiles: String,
    /// Also print fingerprint signatures at this radius.
    #[arg(long)]
    pub radius: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Tolerance for single layers.
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
    /// Tolerance for the assembled network.
    #[arg(long, default_value_t = 1e-3)]
    pub model_tol: f64,
}
