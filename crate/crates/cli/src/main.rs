use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use fedfair_core::experiment::{
    load_experiment_config, run_experiment, ExperimentConfig, MethodChoice, Overrides,
};

/// Fair federated learning simulator.
///
/// Trains a shared logistic model across simulated agents that communicate
/// over a wireless multiple-access channel, either with the fair worst-case
/// method (three analog superposition rounds per iteration) or with plain
/// federated averaging over orthogonal slots, and writes per-iteration
/// trace CSVs, final confusion matrices, and a key/value summary.
#[derive(Parser, Debug)]
#[command(name = "fedfair-sim", version)]
struct Args {
    /// Which method to run
    #[arg(long, default_value = "both", value_parser = ["fedfair", "fedavg", "both"])]
    method: String,

    /// Experiment config file; omitted means the built-in standard setup
    /// (12 agents, 4 features, 10^4 iterations)
    #[arg(long)]
    config: Option<PathBuf>,

    /// Directory for traces, confusion matrices, and summary.txt
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Master seed, overriding the config file
    #[arg(long)]
    seed: Option<u64>,

    /// Trace recording stride, overriding the config file
    #[arg(long)]
    record_every: Option<usize>,
}

fn run(args: &Args) -> anyhow::Result<()> {
    let mut config: ExperimentConfig<f64> = match &args.config {
        Some(path) => load_experiment_config(path)
            .with_context(|| format!("could not load config {}", path.display()))?,
        None => ExperimentConfig::standard(),
    };
    Overrides {
        seed: args.seed,
        record_every: args.record_every,
    }
    .apply(&mut config);
    let method: MethodChoice = args.method.parse()?;

    log::info!(
        "running {method} for {} iterations with {} agents (seed {})",
        config.run.iterations,
        config.run.num_agents,
        config.run.seed
    );
    let summary = run_experiment(&config, method, &args.out)?;
    let text = std::fs::read_to_string(&summary.summary_path)
        .with_context(|| format!("reading back {}", summary.summary_path.display()))?;
    print!("{text}");
    eprintln!("artifacts written to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
