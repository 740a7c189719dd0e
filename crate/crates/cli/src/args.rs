use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "plgen", version, about = "Random process models, event logs and event streams")]
pub struct Cli {
    /// TOML file with `[grammar]`, `[simulation]`, `[evolution]`, `[stream]`
    /// and `[pipeline]` sections; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice. Falls back to the config file, then to
    /// the PLGEN_SEED environment variable, then to 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for independent generations and simulations.
    #[arg(long, global = true, value_name = "K")]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate random process models.
    Generate(GenerateArgs),
    /// Simulate an event log from a model.
    Simulate(SimulateArgs),
    /// Derive a drifted variant of a model.
    Evolve(EvolveArgs),
    /// Stream simulated events over TCP with an HTTP control API.
    Stream(StreamArgs),
    /// Export a model to PNML or DOT.
    Export(ExportArgs),
    /// Check models for structural problems.
    Validate(ValidateArgs),
    /// Run generate, evolve, simulate and export as configured in `[pipeline]`.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct GrammarArgs {
    /// Maximum nesting depth of blocks.
    #[arg(long)]
    pub max_depth: Option<u32>,
    /// Weights of activity, sequence, AND, XOR and skip productions.
    #[arg(long, value_name = "A,S,P,X,E", value_delimiter = ',')]
    pub weights: Option<Vec<f64>>,
    /// Probability of wrapping a block in a loop.
    #[arg(long)]
    pub p_loop: Option<f64>,
    /// Probability of attaching a data object to an activity.
    #[arg(long)]
    pub p_data_object: Option<f64>,
    #[arg(long)]
    pub max_and_branches: Option<u32>,
    #[arg(long)]
    pub max_xor_branches: Option<u32>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Number of models.
    #[arg(long)]
    pub count: Option<usize>,
    /// Output directory for models and `manifest.csv`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub grammar: GrammarArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model file (native or PNML).
    pub model: PathBuf,
    /// Number of traces.
    #[arg(long)]
    pub traces: Option<usize>,
    /// Noise preset: none, complete, control_flow_only, data_only or names_only.
    #[arg(long)]
    pub noise: Option<String>,
    /// Probability of repeating a loop body.
    #[arg(long)]
    pub loop_probability: Option<f64>,
    /// Evaluate hooks with file access enabled.
    #[arg(long)]
    pub allow_script_io: bool,
    /// Output XES file; `.gz` compresses. Standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvolveArgs {
    pub model: PathBuf,
    /// Probability of replacing each activity.
    #[arg(long)]
    pub p_replace: Option<f64>,
    /// Maximum depth of replacement subprocesses.
    #[arg(long)]
    pub max_depth: Option<u32>,
    /// Number of successive evolutions.
    #[arg(long, default_value_t = 1)]
    pub times: u32,
    /// Output model file. Standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Ndjson,
    #[value(name = "xes_fragment", alias = "xes-fragment")]
    XesFragment,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    /// Model file (native or PNML).
    pub model: PathBuf,
    /// Address both listeners bind to.
    #[arg(long)]
    pub host: Option<String>,
    /// Event port; 0 picks a free port.
    #[arg(long)]
    pub port: Option<u16>,
    /// Control API port; 0 picks a free port.
    #[arg(long)]
    pub control_port: Option<u16>,
    /// Wall-clock seconds per simulated second.
    #[arg(long)]
    pub multiplier: Option<f64>,
    /// Number of parallel instances.
    #[arg(long)]
    pub parallel: Option<usize>,
    /// Wire format of emitted events.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Emit as fast as possible.
    #[arg(long)]
    pub max_rate: bool,
    /// Noise preset applied to streamed traces.
    #[arg(long)]
    pub noise: Option<String>,
    /// Print a status line every N events; 0 disables it.
    #[arg(long)]
    pub status_every: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Pnml,
    Dot,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub format: ExportFormat,
    /// Output file. Standard output when omitted.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(required = true)]
    pub models: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Output directory; overrides `pipeline.out`.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}
