use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use parahom::{parse_config, run, Command, ConfigError, RunError};

#[derive(Parser)]
#[command(name = "parahom", version, about = "Coarse-graining and homogenization experiments for parabolic equations")]
struct Cli {
    /// verify, coarse-grain, sweep, homogenize or besov
    command: String,
    #[arg(long)]
    config: PathBuf,
    /// Also write SVG plots next to the CSVs.
    #[arg(long)]
    plots: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the cache directory from the config.
    #[arg(long)]
    cache: Option<PathBuf>,
}

fn execute(cli: &Cli) -> Result<i32, RunError> {
    let command: Command =
        cli.command.parse().map_err(|m| RunError::Config(ConfigError { line: None, message: m }))?;
    let text = std::fs::read_to_string(&cli.config)
        .map_err(|e| RunError::Config(ConfigError { line: None, message: format!("{}: {e}", cli.config.display()) }))?;
    let base = cli.config.parent().map(PathBuf::from).unwrap_or_default();
    let mut cfg = parse_config(&text, &base).map_err(RunError::Config)?;
    if let Some(c) = &cli.cache {
        cfg.cache = Some(c.clone());
    }
    if let Some(t) = cli.threads.or(cfg.threads) {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(|e| RunError::Runtime(e.to_string()))?;
    }
    let outcome = run(&cfg, Some(command), cli.plots)?;
    println!("{} {}: {}", command.name(), if outcome.passed { "passed" } else { "FAILED" }, outcome.csv.display());
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match execute(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("parahom: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
