use clap::{Args, Parser, Subcommand};
use sparse_hyper::experiments::{run_to_file, ExperimentConfig, ExperimentKind, MetricFormat};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sparse-hyper", version, about = "Run sparse hyperlayer experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the identity matrix with a sparse layer.
    Identity(RunArgs),
    /// Train a key network through the differentiable quicksort.
    Sort(RunArgs),
    /// Classify synthetic patches with a single learned glimpse.
    Attention(RunArgs),
    /// Learn the identity matrix with the score-function baseline.
    ReinforceIdentity(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML file with config keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set lr=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Metrics file; the resolved config is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "csv", value_parser = ["csv", "jsonl"])]
    format: String,
    #[arg(long)]
    eval_size: Option<usize>,
}

fn execute(kind: ExperimentKind, args: RunArgs) -> sparse_hyper::Result<()> {
    let mut overrides = args.set;
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(n) = args.eval_size {
        overrides.push(format!("eval_size={n}"));
    }
    let cfg = ExperimentConfig::load(kind, args.config.as_deref(), &overrides)?;
    let format: MetricFormat = args.format.parse()?;
    let out = args
        .out
        .unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}.{}", kind.name(), cfg.seed, format.extension())));
    let rows = run_to_file(&cfg, &out, format)?;
    if let Some(last) = rows.last() {
        println!(
            "{}: {} batches, final eval {:.6}, metrics in {}",
            kind.name(),
            last.iteration,
            last.eval_metric,
            out.display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Identity(a) => (ExperimentKind::Identity, a),
        Command::Sort(a) => (ExperimentKind::Sort, a),
        Command::Attention(a) => (ExperimentKind::Attention, a),
        Command::ReinforceIdentity(a) => (ExperimentKind::ReinforceIdentity, a),
    };
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
