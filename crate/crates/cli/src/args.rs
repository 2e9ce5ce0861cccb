// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gxli_core::eval::Mode;
use gxli_core::Lang;

#[derive(Debug, Parser)]
#[command(name = "gxli", version, about = "Cross-lingual hidden-state intervention toolkit")]
pub struct Cli {
    /// Seed for every randomised step.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write data here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build, inspect and merge memory files.
    #[command(subcommand)]
    Memory(MemoryCmd),
    /// Score model responses.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Layer / strength sweeps.
    #[command(subcommand)]
    Tune(TuneCmd),
    /// Cluster diagnostics.
    #[command(subcommand)]
    Diag(DiagCmd),
    /// Inter-rater agreement.
    #[command(subcommand)]
    Kappa(KappaCmd),
    /// Run the engine as an intervention service.
    Serve(ServeArgs),
    /// Synthetic inputs.
    #[command(subcommand)]
    Fixture(FixtureCmd),
}

/// Hyper-parameters of the built-in toy transformer.
#[derive(Debug, Clone, Args)]
pub struct ToyArgs {
    #[arg(id = "model_layers", long = "model-layers", default_value_t = 12)]
    pub layers: usize,
    #[arg(id = "model_dim", long = "model-dim", default_value_t = 64)]
    pub dim: usize,
    #[arg(id = "model_seed", long = "model-seed", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum KeySourceArg {
    /// Question followed by the answer tokens.
    #[default]
    QuestionAnswer,
    QuestionOnly,
}

#[derive(Debug, Subcommand)]
pub enum MemoryCmd {
    /// Build a memory from state pairs or a toy corpus.
    Build(MemoryBuildArgs),
    /// Print entry count, dimension, layer and language.
    Inspect { path: PathBuf },
    /// Concatenate compatible memories.
    Merge {
        #[arg(required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct MemoryBuildArgs {
    /// JSONL of state pairs or toy corpus rows.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub layer: usize,
    /// Target language; inferred when the input holds only one.
    #[arg(long)]
    pub lang: Option<Lang>,
    #[arg(long, value_enum, default_value_t)]
    pub keys: KeySourceArg,
    /// Also write a JSONL manifest of the stored entries.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[command(flatten)]
    pub toy: ToyArgs,
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Score a response file, or generate responses with the toy model.
    Run(EvalRunArgs),
    /// Per-cell deltas between two reports.
    Compare { before: PathBuf, after: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Toy,
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_enum, conflicts_with = "responses", required_unless_present = "responses")]
    pub model: Option<ModelKind>,
    /// JSONL of {id, response}.
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// Write the generated responses as JSONL.
    #[arg(long)]
    pub save_responses: Option<PathBuf>,
    #[arg(long, conflicts_with = "responses")]
    pub memory: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Must match the memory's layer when given.
    #[arg(long)]
    pub layer: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, value_parser = parse_mode, default_value = "direct")]
    pub mode: Mode,
    #[arg(long)]
    pub dim_filter: bool,
    #[arg(long)]
    pub no_intervention: bool,
    /// Tokens generated per sample.
    #[arg(long, default_value_t = 8)]
    pub max_tokens: usize,
    #[command(flatten)]
    pub toy: ToyArgs,
}

#[derive(Debug, Subcommand)]
pub enum TuneCmd {
    /// Two-phase sweep on the toy model.
    Grid(TuneGridArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Objective {
    /// FPR-ACC of the target language on --dataset.
    #[default]
    FprAcc,
    /// Relative centroid-gap reduction on held-out corpus pairs.
    Gap,
}

#[derive(Debug, Args)]
pub struct TuneGridArgs {
    /// Toy corpus JSONL the memories are built from.
    #[arg(long)]
    pub pairs: PathBuf,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub objective: Objective,
    #[arg(long)]
    pub lang: Option<Lang>,
    /// Layers as a list or range, e.g. `4-8` or `3,5,7`.
    #[arg(long, value_parser = parse_layers)]
    pub layers: Option<LayerList>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    pub fixed_alpha: f64,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, value_parser = parse_mode, default_value = "direct")]
    pub mode: Mode,
    #[arg(long)]
    pub dim_filter: bool,
    #[arg(long, value_enum, default_value_t)]
    pub keys: KeySourceArg,
    /// Fraction of corpus pairs held out as gap queries.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, default_value_t = 8)]
    pub max_tokens: usize,
    /// Evaluate each phase's configurations on parallel threads.
    #[arg(long)]
    pub parallel: bool,
    #[command(flatten)]
    pub toy: ToyArgs,
}

#[derive(Debug, Subcommand)]
pub enum DiagCmd {
    /// Mean distance to the English centroid, per language.
    Gap(DiagGapArgs),
    /// Two-dimensional PCA projection.
    Project(StateSource),
}

/// Where diagnostic states come from.
#[derive(Debug, Args)]
pub struct StateSource {
    /// JSONL of {id, lang, h}.
    #[arg(long, conflicts_with = "pairs", required_unless_present = "pairs")]
    pub states: Option<PathBuf>,
    /// Toy corpus JSONL; states are taken from the toy model.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Layer for `--pairs`.
    #[arg(long)]
    pub layer: Option<usize>,
    #[command(flatten)]
    pub toy: ToyArgs,
}

#[derive(Debug, Args)]
pub struct DiagGapArgs {
    #[command(flatten)]
    pub source: StateSource,
    /// Report the gap after intervening with this memory.
    #[arg(long)]
    pub memory: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long)]
    pub dim_filter: bool,
}

#[derive(Debug, Subcommand)]
pub enum KappaCmd {
    /// Fleiss' kappa from a count table (CSV) or split frequencies (JSON).
    Compute {
        #[arg(long)]
        input: PathBuf,
        /// Raters per item for split-frequency input.
        #[arg(long, default_value_t = 6)]
        raters: u32,
    },
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("transport").required(true))]
pub struct ServeArgs {
    #[arg(long, group = "transport")]
    pub stdio: bool,
    #[arg(long, group = "transport", value_name = "ADDR")]
    pub tcp: Option<String>,
    /// Preload this memory; it is frozen under --concurrent.
    #[arg(long)]
    pub memory: Option<PathBuf>,
    #[arg(long)]
    pub dim_filter: bool,
    #[arg(long, requires = "tcp")]
    pub concurrent: bool,
    #[arg(long)]
    pub once: bool,
}

#[derive(Debug, Subcommand)]
pub enum FixtureCmd {
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum FixtureKind {
    /// Parallel token corpus for the toy model.
    #[default]
    Tokens,
    /// State pairs with a known language offset.
    Latent,
    /// Multiple-choice benchmark items.
    Dataset,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value_t)]
    pub kind: FixtureKind,
    /// Pairs, or items per (language, dimension) for datasets.
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, value_delimiter = ',', default_value = "ZH")]
    pub langs: Vec<Lang>,
    /// Latent state dimension.
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    pub offset_norm: f64,
    #[command(flatten)]
    pub toy: ToyArgs,
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerList(pub Vec<usize>);

fn parse_layers(s: &str) -> Result<LayerList, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad layer {t:?}"));
    let mut out = Vec::new();
    for part in s.split(',') {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty range {part:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    Ok(LayerList(out))
}
