//! Command-line front end. Every command writes fixed file names into
//! `--out-dir` plus a `run_config.json` that `rerun` can replay.

mod commands;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use commands::execute;

pub const ALL_DESCRIPTORS: &str = "net_charge,n_charged,polar,nonpolar,aromatic,hb_donors,hb_acceptors,mass";

#[derive(Debug, Clone, Parser, Serialize, Deserialize)]
#[command(name = "pepbayes", version, about = "Peptide activity models over descriptor ranks and sequence motifs")]
pub struct Cli {
    /// Root seed; every stage derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output directory (created if missing). Defaults to the current directory.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,

    /// Directory holding residue_frequency.csv and residue_properties.csv
    /// overrides; built-in tables are used for any file not present.
    #[arg(long, global = true, env = "PEPBAYES_DATA_DIR")]
    pub data_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Validate and normalize a dataset file.
    Ingest(IngestArgs),
    /// Drop sequences within a few substitutions of an earlier one.
    Dedup(DedupArgs),
    /// Generate one composition-matched decoy per peptide.
    Decoy(DecoyArgs),
    /// Random train/test split.
    Split(SplitArgs),
    /// Compute additive descriptors for every peptide.
    Descriptors(DescriptorArgs),
    /// Build descriptor distributions over the chemical space, with quantiles.
    Space(SpaceArgs),
    /// Convert descriptor values into ranks.
    Rank(RankArgs),
    /// Train the two-state Gaussian mixture classifier.
    TrainQspr(TrainQsprArgs),
    /// Train the motif model.
    TrainMotif(TrainMotifArgs),
    /// Calibrate the combined model and sweep the motif weight.
    Combine(CombineArgs),
    /// ROC, best cutoff and confusion summary.
    Evaluate(EvaluateArgs),
    /// Select peptides scoring at or above a cutoff.
    Screen(ScreenArgs),
    /// Linear SVM baseline on descriptor ranks.
    BaselineSvm(SvmArgs),
    /// Predict/Found table and fitted distributions of a motif model.
    ReportMotifs(ReportArgs),
    /// Replay a previous run from its run_config.json.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Keep only the sequence and label columns.
    #[arg(long)]
    pub sequences_only: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DedupArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub max_subs: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DecoyArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Residue frequency CSV (`symbol,probability`).
    #[arg(long)]
    pub frequencies: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DescriptorArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Comma-separated descriptor names.
    #[arg(long, default_value = ALL_DESCRIPTORS)]
    pub descriptors: String,
    /// Residue property CSV.
    #[arg(long)]
    pub properties: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceMethod {
    Exact,
    Normal,
    Sampled,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SpaceArgs {
    #[arg(long, default_value = ALL_DESCRIPTORS)]
    pub descriptors: String,
    /// Comma-separated peptide lengths.
    #[arg(long, required_unless_present = "lengths_from")]
    pub lengths: Option<String>,
    /// Use every distinct length found in this dataset.
    #[arg(long)]
    pub lengths_from: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SpaceMethod::Normal)]
    pub method: SpaceMethod,
    /// Draws per distribution for the sampled method.
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 100)]
    pub quantiles: u32,
    #[arg(long)]
    pub properties: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RankArgs {
    /// Descriptor CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Distribution file written by `space`.
    #[arg(long)]
    pub space: PathBuf,
}

/// Either one labeled file or separate positive and negative files.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct LabeledArgs {
    /// Dataset with a label column (1 active, 0 inactive).
    #[arg(long, required_unless_present = "positives")]
    pub input: Option<PathBuf>,
    #[arg(long, conflicts_with = "input", requires = "negatives")]
    pub positives: Option<PathBuf>,
    #[arg(long, conflicts_with = "input", requires = "positives")]
    pub negatives: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainQsprArgs {
    #[command(flatten)]
    pub data: LabeledArgs,
    #[arg(long, default_value_t = 2)]
    pub kernels: usize,
    #[arg(long, default_value_t = 3000)]
    pub steps: usize,
    /// Rank scale of the input (bounds the priors).
    #[arg(long, default_value_t = 100)]
    pub quantiles: u32,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainMotifArgs {
    /// Training sequences; entries labeled 0 are skipped.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub motifs: usize,
    #[arg(long, default_value_t = 4)]
    pub width: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 1000)]
    pub iterations: usize,
    /// Keep the motif-class prior uniform.
    #[arg(long)]
    pub uniform_prior: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long)]
    pub qspr_model: Option<PathBuf>,
    #[arg(long)]
    pub motif_model: Option<PathBuf>,
    /// Motif weight when both models are given.
    #[arg(long)]
    pub weight: Option<f64>,
    /// Dataset whose maximum likelihoods normalize each half; defaults to
    /// the positives being scored.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct CombineArgs {
    #[command(flatten)]
    pub data: LabeledArgs,
    #[arg(long)]
    pub qspr_model: PathBuf,
    #[arg(long)]
    pub motif_model: PathBuf,
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// A point count (evenly spaced on [0, 1]) or a comma-separated list.
    #[arg(long, default_value = "101")]
    pub weight_grid: String,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    /// Precomputed scores (`sequence,label,score`); replaces the model flags.
    #[arg(long, conflicts_with_all = ["input", "positives", "qspr_model", "motif_model"])]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, conflicts_with = "input", requires = "negatives")]
    pub positives: Option<PathBuf>,
    #[arg(long, conflicts_with = "input", requires = "positives")]
    pub negatives: Option<PathBuf>,
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long, default_value_t = 1000)]
    pub cutoffs: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ScreenArgs {
    /// Peptides to screen (with rank columns if a QSPR model is used).
    #[arg(long, required_unless_present = "scores")]
    pub input: Option<PathBuf>,
    /// Precomputed scores (`sequence,score`); replaces the model flags.
    #[arg(long, conflicts_with_all = ["input", "qspr_model", "motif_model"])]
    pub scores: Option<PathBuf>,
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long, required_unless_present = "evaluation")]
    pub cutoff: Option<f64>,
    /// evaluation.json from `evaluate`: supplies the cutoff and normalizers.
    #[arg(long, conflicts_with = "cutoff")]
    pub evaluation: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub min_length: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SvmArgs {
    /// Labeled training ranks.
    #[arg(long)]
    pub train: PathBuf,
    /// Labeled test ranks.
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, default_value_t = 3000)]
    pub epochs: usize,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ReportArgs {
    #[arg(long)]
    pub motif_model: PathBuf,
    /// Sequences to audit (Predict and Found columns).
    #[arg(long)]
    pub input: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RerunArgs {
    #[arg(long)]
    pub config: PathBuf,
}
