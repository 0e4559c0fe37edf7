use clap::{Args, Parser, Subcommand};
use fewshot_cli::commands;
use fewshot_cli::config::RunConfig;
use fewshot_core::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Few-shot classification lab: synthetic data, backbone pre-training,
/// episodic evaluation with transductive fine-tuning, and hardness
/// reporting.
#[derive(Parser)]
#[command(name = "fewshot", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the evaluation worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Restrict evaluation to a single method.
    #[arg(long)]
    method: Option<String>,
    /// Override episodes per protocol.
    #[arg(long)]
    episodes_per_protocol: Option<u32>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the dataset file.
    GenData(CommonArgs),
    /// Pre-train the backbone and write its checkpoint.
    Pretrain(CommonArgs),
    /// Mint the episode files for the evaluation grid.
    Episodes(CommonArgs),
    /// Evaluate every (protocol, method) cell.
    Eval(CommonArgs),
    /// Score episode hardness and fit the accuracy regression.
    Hardness(CommonArgs),
    /// Sweep one protocol axis.
    Sweep(CommonArgs),
}

fn run(args: &CommonArgs, f: impl FnOnce(&RunConfig, &std::path::Path) -> fewshot_core::Result<Vec<PathBuf>>) -> fewshot_core::Result<()> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(workers) = args.workers {
        config.eval.workers = workers;
    }
    if let Some(episodes) = args.episodes_per_protocol {
        config.eval.episodes_per_protocol = episodes;
    }
    if let Some(method) = &args.method {
        config.eval.methods = vec![method.parse()?];
    }
    config.validate()?;
    let out_dir = config.resolve_out_dir(args.out.as_deref());
    let outputs = f(&config, &out_dir)?;
    for path in outputs {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::GenData(a) => run(a, commands::cmd_gen_data),
        Command::Pretrain(a) => run(a, commands::cmd_pretrain),
        Command::Episodes(a) => run(a, commands::cmd_episodes),
        Command::Eval(a) => run(a, commands::cmd_eval),
        Command::Hardness(a) => run(a, commands::cmd_hardness),
        Command::Sweep(a) => run(a, commands::cmd_sweep),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Distinct exit codes per failure class: 2 configuration, 3 file/io,
/// 4 numeric divergence, 1 anything else.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Io { .. } | Error::Format { .. } | Error::Checksum { .. } => 3,
        Error::Divergence { .. } => 4,
        _ => 1,
    }
}
