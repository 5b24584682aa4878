//! `leaning`: synthesize, ingest, embed, reduce, evaluate and plot retweet
//! graphs for political leaning inference.

mod commands;
mod config;
mod manifest;
mod svg;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub msg: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Usage, msg: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Data, msg: msg.into() }
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CliError { kind: ErrorKind::Numeric, msg: msg.into() }
    }

    fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Usage => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl From<leaning_core::Error> for CliError {
    fn from(e: leaning_core::Error) -> Self {
        use leaning_core::Error as E;
        let kind = match &e {
            E::Config(_) => ErrorKind::Usage,
            E::Numeric(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        };
        CliError { kind, msg: e.to_string() }
    }
}

/// Settings shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Context {
    pub argv: Vec<String>,
    pub threads: usize,
    pub deterministic: bool,
}

impl Context {
    /// Worker count for the lock-free SGD trainers.
    pub fn workers(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.threads.max(1)
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "leaning", version, about = "Political leaning inference from retweet graphs")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "LEANING_THREADS")]
    threads: Option<usize>,
    /// Single-worker numeric paths, so outputs are byte-identical across runs.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic tiered multi-party retweet graph.
    Synth(SynthArgs),
    /// Canonicalize an edge list (and optionally labels) into a directory.
    Ingest(IngestArgs),
    /// Train user representations: re, deepwalk, node2vec or fa2.
    Embed(EmbedArgs),
    /// Reduce an embedding with pca or tsne.
    Reduce(ReduceArgs),
    /// Evaluate an embedding under loo, kshot:K or tier:TIER.
    Eval(EvalArgs),
    /// Scatter plot of a 2-D embedding colored by party.
    Plot(PlotArgs),
    /// Run synth, embed, reduce, eval and plot from one config file.
    Pipeline(PipelineArgs),
    /// Print users, edges and total retweets, tab-separated.
    Stats(StatsArgs),
    /// Check the file digests recorded in a run manifest.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in configuration, e.g. uk-like.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub edges: PathBuf,
    /// auto, pairs or counted.
    #[arg(long, default_value = "auto")]
    pub format: String,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Collapse repeated retweets of the same pair.
    #[arg(long)]
    pub dedup: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long, default_value = "auto")]
    pub format: String,
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long)]
    pub walks_per_node: Option<usize>,
    #[arg(long)]
    pub walk_length: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
    /// FA2 iterations.
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub dedup: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReduceArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// pca or tsne.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Reduce only the labeled users selected by --tiers and --region.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Comma-separated tiers kept with --labels.
    #[arg(long, default_value = "member")]
    pub tiers: String,
    #[arg(long)]
    pub region: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Region to evaluate (default: every region with members).
    #[arg(long)]
    pub region: Option<String>,
    /// loo, kshot:K[xREPS], tier:supporter or tier:sympathizer.
    #[arg(long)]
    pub scenario: Option<String>,
    /// logreg, gnb, linsvm, rf or majority.
    #[arg(long)]
    pub classifier: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    #[arg(long)]
    pub region: Option<String>,
    /// member, supporter, sympathizer or all.
    #[arg(long, default_value = "member")]
    pub tier: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(long)]
    pub edges: PathBuf,
    #[arg(long, default_value = "auto")]
    pub format: String,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    pub manifest: PathBuf,
    /// Re-run the recorded command and compare the new outputs too.
    #[arg(long)]
    pub rerun: bool,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let threads = cli
        .threads
        .filter(|&t| t > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
        log::warn!("could not size the thread pool: {e}");
    }
    let ctx = Context {
        argv,
        threads,
        deterministic: cli.deterministic,
    };
    let result = match cli.cmd {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Ingest(a) => commands::ingest(&ctx, a),
        Command::Embed(a) => commands::embed(&ctx, a),
        Command::Reduce(a) => commands::reduce(&ctx, a),
        Command::Eval(a) => commands::eval(&ctx, a),
        Command::Plot(a) => commands::plot(&ctx, a),
        Command::Pipeline(a) => commands::pipeline(&ctx, a),
        Command::Stats(a) => commands::stats(a),
        Command::Verify(a) => commands::verify(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
