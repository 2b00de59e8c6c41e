use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use fedlab_cli::{configure_workers_from_env, emit_report, replay, run_stages, CliError, CliResult, ExperimentConfig, Format, RunDir, Stage};

#[derive(Parser)]
#[command(name = "fedlab", version, about = "Federated recommendation privacy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config field, e.g. `--set train.global_rounds=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the stages listed in the config.
    Run(Common),
    /// Load and split the dataset, write statistics.
    Ingest(Common),
    /// Federated training with trace archiving.
    Train(Common),
    /// Attack the last archived round.
    Attack(Common),
    /// λ, μ and γ grids.
    Sweep(Common),
    /// Bucket, cost-effectiveness and deviation analysis.
    Analyze(Common),
    /// Emit summary tables from a finished run.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Format::Csv, Format::Json, Format::Markdown])]
        format: Vec<Format>,
        /// Restrict to the named tables.
        #[arg(long)]
        table: Vec<String>,
    },
    /// Re-run a finished experiment from its config snapshot and compare.
    Replay {
        #[command(flatten)]
        common: Common,
        /// Where the re-run goes; defaults to `<out>/replay`.
        #[arg(long)]
        into: Option<PathBuf>,
    },
}

fn load(common: &Common) -> CliResult<ExperimentConfig> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config", "required for this subcommand"))?;
    let mut cfg = ExperimentConfig::load(path, &common.set)?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

/// Output directory from `--out`, else from the config.
fn run_dir(common: &Common) -> CliResult<PathBuf> {
    match &common.out {
        Some(out) => Ok(out.clone()),
        None => Ok(load(common)?.out),
    }
}

fn stages(cfg: &ExperimentConfig, stage: Stage) -> CliResult<()> {
    run_stages(cfg, &[stage]).map(|_| ())
}

fn execute(cli: Cli) -> CliResult<()> {
    configure_workers_from_env()?;
    match cli.command {
        Command::Run(c) => {
            let cfg = load(&c)?;
            run_stages(&cfg, &cfg.stages)?;
        }
        Command::Ingest(c) => stages(&load(&c)?, Stage::Ingest)?,
        Command::Train(c) => stages(&load(&c)?, Stage::Train)?,
        Command::Attack(c) => stages(&load(&c)?, Stage::Attack)?,
        Command::Sweep(c) => stages(&load(&c)?, Stage::Sweep)?,
        Command::Analyze(c) => stages(&load(&c)?, Stage::Analyze)?,
        Command::Report { common, format, table } => {
            let dir = RunDir::new(run_dir(&common)?);
            for path in emit_report(&dir, &format, &table)? {
                println!("{}", path.display());
            }
        }
        Command::Replay { common, into } => {
            let original = run_dir(&common)?;
            let into = into.unwrap_or_else(|| original.join("replay"));
            let mismatches = replay(&original, &into)?;
            if !mismatches.is_empty() {
                return Err(CliError::Replay(mismatches));
            }
            println!("replay of {} matches", original.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
