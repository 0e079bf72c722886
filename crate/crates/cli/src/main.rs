mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "decorr", version, about = "Merge programs into one decorrelated listing and run it")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile programs into an obfuscated listing plus trusted material.
    Compile(CompileArgs),
    /// Execute a compiled listing inside the simulated trusted runtime.
    Run(RunArgs),
    /// Time the bundled benchmark pair solo and merged.
    Bench(BenchArgs),
    /// Score the adversary against a listing and its trace.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct CompileArgs {
    /// Source programs, one per file.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Artifact directory.
    #[arg(short, long, default_value = "out")]
    out: PathBuf,
    /// Base seed; the three seeds below default to values derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    compile_seed: Option<u64>,
    #[arg(long)]
    junk_seed: Option<u64>,
    #[arg(long)]
    perm_seed: Option<u64>,
    #[arg(long, default_value_t = 2)]
    alpha: u64,
    #[arg(long, default_value_t = 5)]
    beta: u64,
    #[arg(long, default_value_t = 1_000_000)]
    id_bound: u64,
    #[arg(long, default_value_t = 8)]
    page_bits: u32,
    #[arg(long, default_value_t = 16)]
    counter_bits: u32,
    #[command(flatten)]
    shuffle: ShuffleArgs,
    /// Extra junk rounds as a fraction of the per-opcode count.
    #[arg(long, default_value_t = 0.0)]
    junk_ratio: f64,
    /// Additional programs made only of junk.
    #[arg(long, default_value_t = 0)]
    junk_programs: usize,
    /// Skip opcode equalization.
    #[arg(long)]
    no_uniformize: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Clone, Copy)]
struct ShuffleArgs {
    /// Mean accesses between shuffles. Defaults to the number of programs.
    #[arg(long, conflicts_with = "no_shuffle")]
    shuffle_period: Option<u64>,
    /// Never shuffle memory.
    #[arg(long)]
    no_shuffle: bool,
}

#[derive(Args)]
struct RunArgs {
    /// Artifact directory written by `compile`.
    dir: PathBuf,
    /// Key file, if not in the artifact directory.
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long, default_value_t = decorr::eval::DEFAULT_FUEL)]
    fuel: u64,
    /// Trace destination. Defaults to `trace.jsonl` in the artifact directory.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    no_trace: bool,
    /// Override the compiled shuffle period.
    #[command(flatten)]
    shuffle: ShuffleArgs,
    #[arg(long, value_enum, default_value_t = Guard::Inclusive)]
    guard: Guard,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Guard {
    Strict,
    Inclusive,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 4000)]
    average_len: u32,
    #[arg(long, default_value_t = 10_000)]
    dot_len: u32,
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Mean accesses between shuffles, shared by solo and merged runs.
    #[arg(long, default_value_t = 2)]
    shuffle_period: u64,
    /// Skip opcode equalization, as in the original measurement.
    #[arg(long)]
    no_uniformize: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Artifact directory with listing and provenance.
    dir: PathBuf,
    /// Trace file. Defaults to `trace.jsonl` in the artifact directory.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Also brute-force the key modulus from the listing.
    #[arg(long)]
    residue: bool,
    /// Accuracy above baseline tolerated before flagging.
    #[arg(long, default_value_t = 0.05)]
    tolerance: f64,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Compile(a) => commands::compile(a),
        Command::Run(a) => commands::run(a),
        Command::Bench(a) => commands::bench(a),
        Command::Analyze(a) => commands::analyze(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
