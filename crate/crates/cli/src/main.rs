//! `homolog`: train projection heads, search and evaluate protein databases.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 data or I/O error.
//! Data goes to stdout; logs go to stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "homolog",
    version,
    about = "Late-interaction protein homolog retrieval"
)]
struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a projection head with the symmetric InfoNCE objective.
    Train(TrainArgs),
    /// Rank database proteins against one query.
    Search(SearchArgs),
    /// Leave-one-out capped recall@k over a labeled database.
    Eval(EvalArgs),
    /// Export the residue similarity matrix of one protein pair as CSV.
    Simmap(SimmapArgs),
    /// Sample one same-group positive per anchor into a pairs TSV.
    Pairs(PairsArgs),
    /// Project (or normalize) hidden sets into an embedding file.
    Project(ProjectArgs),
    /// Write MinHash signatures for a FASTA file.
    Sketch(SketchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerArg {
    Maxsim,
    Pooled,
    Minhash,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Maxsim,
    Pooled,
}

#[derive(Debug, Args)]
pub struct MinhashOpts {
    /// k-mer length for the MinHash scorer.
    #[arg(long, default_value_t = homolog_core::minhash::DEFAULT_K)]
    kmer: usize,
    /// Number of hash functions for the MinHash scorer.
    #[arg(long, default_value_t = homolog_core::minhash::DEFAULT_NUM_PERM)]
    num_perm: usize,
    /// Hash-family seed for the MinHash scorer.
    #[arg(long, default_value_t = 0)]
    minhash_seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TSV of `anchor_id<TAB>positive_id<TAB>group`.
    #[arg(long)]
    pairs: PathBuf,
    /// Row-set file with backbone hidden sets for every paired id.
    #[arg(long)]
    hidden: PathBuf,
    /// Output head checkpoint.
    #[arg(long)]
    out_head: PathBuf,
    /// Training log path (default: `<out-head>.log.tsv`).
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    batch_size: usize,
    #[arg(long, default_value_t = 3)]
    epochs: usize,
    /// Peak learning rate of the one-cycle schedule.
    #[arg(long, default_value_t = 2e-5)]
    lr: f64,
    #[arg(long, default_value_t = 1.0)]
    tau: f64,
    /// Output dimension of the head.
    #[arg(long, default_value_t = homolog_core::DEFAULT_DIM)]
    dim: usize,
    #[arg(long, default_value_t = 0.1)]
    warmup_frac: f64,
    #[arg(long, default_value_t = 0.01)]
    weight_decay: f64,
    #[arg(long, default_value_t = 1.0)]
    clip_norm: f64,
    /// Score inside the loss (`pooled` trains the uni-vector baseline).
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Maxsim)]
    objective: ObjectiveArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Database manifest (TOML).
    #[arg(long)]
    db: PathBuf,
    /// Projection head; without it hidden rows are normalized directly.
    #[arg(long)]
    head: Option<PathBuf>,
    /// Query by database id.
    #[arg(
        long,
        conflicts_with = "query_fasta",
        required_unless_present = "query_fasta"
    )]
    query_id: Option<String>,
    /// Query from a FASTA file (first record).
    #[arg(long)]
    query_fasta: Option<PathBuf>,
    /// Hidden sets for an external query (maxsim/pooled).
    #[arg(long, requires = "query_fasta")]
    hidden: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScorerArg::Maxsim)]
    scorer: ScorerArg,
    /// Number of results to print.
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[command(flatten)]
    minhash: MinhashOpts,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    head: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScorerArg::Maxsim)]
    scorer: ScorerArg,
    /// Comma-separated cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    ks: Vec<usize>,
    /// JSON-lines report (one object per query plus an aggregate).
    #[arg(long)]
    out_report: Option<PathBuf>,
    #[command(flatten)]
    minhash: MinhashOpts,
}

#[derive(Debug, Args)]
pub struct SimmapArgs {
    #[arg(long)]
    db: PathBuf,
    #[arg(long)]
    head: Option<PathBuf>,
    #[arg(long)]
    query_id: String,
    #[arg(long)]
    cand_id: String,
    /// Output CSV (default: stdout).
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    /// Labels TSV `id<TAB>group`.
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    hidden: PathBuf,
    #[arg(long)]
    head: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SketchArgs {
    #[arg(long)]
    fasta: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    minhash: MinhashOpts,
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
    env_logger::Builder::new()
        .filter_level(level)
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(e) = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
    {
        log::warn!("could not configure thread pool: {e}");
    }
    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Search(a) => commands::search(a),
        Command::Eval(a) => commands::eval(a),
        Command::Simmap(a) => commands::simmap(a),
        Command::Pairs(a) => commands::pairs(a),
        Command::Project(a) => commands::project_hidden(a),
        Command::Sketch(a) => commands::sketch(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
