use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use warpfit_cli::{cmd_validate, run, CliError, CliResult, Command, RunConfig};

/// Regression with a prescribed number of stationary points.
#[derive(Parser)]
#[command(name = "warpfit", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Maximum-likelihood fit with bootstrap intervals.
    Fit(RunArgs),
    /// Posterior sampling with HPD intervals.
    Sample(RunArgs),
    /// Run a simulation study.
    Simulate(RunArgs),
    /// Check a config and its data without running anything.
    Validate(RunArgs),
    /// Run the command named in the config file.
    Run(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`.
    #[arg(short, long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(args: &RunArgs, command: Option<Command>) -> CliResult<RunConfig> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if command.is_some() {
        config.command = command;
    }
    Ok(config)
}

fn execute(cli: &Cli) -> CliResult<Option<PathBuf>> {
    let (args, command) = match &cli.command {
        Sub::Fit(a) => (a, Some(Command::Fit)),
        Sub::Sample(a) => (a, Some(Command::Sample)),
        Sub::Simulate(a) => (a, Some(Command::Simulate)),
        Sub::Run(a) => (a, None),
        Sub::Validate(a) => {
            let report = cmd_validate(&load(a, None)?)?;
            print!("{}", report.to_text());
            return Ok(None);
        }
    };
    let config = load(args, command)?;
    let out = run(&config)?;
    for f in &out.files {
        log::info!("wrote {}", f.display());
    }
    print!("{}", out.report.to_text());
    Ok(Some(config.output_dir))
}

fn output_dir_of(cli: &Cli) -> Option<PathBuf> {
    let args = match &cli.command {
        Sub::Fit(a) | Sub::Sample(a) | Sub::Simulate(a) | Sub::Run(a) => a,
        Sub::Validate(_) => return None,
    };
    args.out.clone().or_else(|| RunConfig::load(&args.config).ok().map(|c| c.output_dir))
}

fn report_error(cli: &Cli, err: &CliError) {
    let doc = serde_json::to_string_pretty(&err.document()).unwrap_or_default();
    eprintln!("{doc}");
    if let Some(dir) = output_dir_of(cli) {
        if std::fs::create_dir_all(&dir).is_ok() {
            let _ = std::fs::write(dir.join("error.json"), format!("{doc}\n"));
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(err) => {
            report_error(&cli, &err);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
