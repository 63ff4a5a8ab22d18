use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use levelcg::{run_command, with_threads, CliError, Command, LoadedConfig};

#[derive(Debug, Parser)]
#[command(name = "levelcg", version, about = "Level-set coarse-graining experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "LEVELCG_THREADS")]
    threads: Option<usize>,
}

fn run(args: Args) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(p) => LoadedConfig::from_path(p)?,
        None => LoadedConfig::defaults(),
    };
    if let Some(seed) = args.seed {
        cfg.config.apply_seed(seed);
        cfg.source.push_str(&format!("\n# --seed {seed}\n"));
        cfg.revalidate()?;
    }
    let dir = args.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.config.output.dir));
    let threads = args.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(CliError::Config(levelcg::ConfigError::new("--threads", "must be at least 1")));
    }
    with_threads(threads, || run_command(args.command, &cfg, &dir))?
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("levelcg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
