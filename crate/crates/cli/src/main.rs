use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;
mod error;
mod plot;

use commands::StudyKind;
use config::{MeshSpec, RunConfig};
use error::CliError;

/// Bulk-surface Cahn-Hilliard simulator.
#[derive(Debug, Parser)]
#[command(name = "bsch", version)]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for studies (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for random data; overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a unit-square mesh, or validate and normalize the configured mesh.
    Mesh {
        /// Unit-square resolution; overrides the config.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Time-dependent run: diagnostics CSV and field snapshots.
    Simulate,
    /// Singular elliptic problem along the λ-schedule.
    Elliptic,
    /// Cross-run study; exits 3 on FAIL.
    Study {
        #[arg(value_enum)]
        kind: StudyKind,
    },
    /// SVG line plot of CSV columns; the first column is the abscissa.
    Plot {
        csv: PathBuf,
        #[arg(long, default_value = "t,energy_total")]
        columns: String,
        /// Target file (default: the CSV path with extension `svg`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::Validation("--config is required for this command".into()))?;
    RunConfig::load(path, cli.seed)
}

fn out_dir(cli: &Cli, cfg: Option<&RunConfig>) -> PathBuf {
    cli.out.clone().or_else(|| cfg.map(|c| c.out_dir.clone())).unwrap_or_else(|| PathBuf::from("out"))
}

fn run(cli: &Cli) -> Result<ExitCode, CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Validation("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(|e| CliError::Validation(e.to_string()))?;
    }
    let seed_of = |cfg: Option<&RunConfig>| cfg.map_or(cli.seed.unwrap_or(0), |c| c.seed);
    match &cli.command {
        Command::Mesh { n } => {
            let cfg = cli.config.as_ref().map(|_| load(cli)).transpose()?;
            let spec = match (n, &cfg) {
                (Some(n), _) => MeshSpec::UnitSquare(*n),
                (None, Some(c)) => c.mesh.clone(),
                (None, None) => MeshSpec::UnitSquare(8),
            };
            let out = out_dir(cli, cfg.as_ref());
            println!("{}", commands::cmd_mesh(&spec, &out)?);
            commands::write_meta(&out, "mesh", cli.config.as_deref(), seed_of(cfg.as_ref()))?;
        }
        Command::Simulate | Command::Elliptic => {
            let cfg = load(cli)?;
            let out = out_dir(cli, Some(&cfg));
            let name = if matches!(cli.command, Command::Simulate) { "simulate" } else { "elliptic" };
            commands::ensure_dir(&out)?;
            commands::write_meta(&out, name, cli.config.as_deref(), cfg.seed)?;
            let msg = match cli.command {
                Command::Simulate => commands::cmd_simulate(&cfg, &out)?,
                _ => commands::cmd_elliptic(&cfg, &out)?,
            };
            println!("{msg}");
        }
        Command::Study { kind } => {
            let cfg = load(cli)?;
            let out = out_dir(cli, Some(&cfg));
            commands::ensure_dir(&out)?;
            commands::write_meta(&out, &format!("study {kind:?}").to_lowercase(), cli.config.as_deref(), cfg.seed)?;
            let verdict = commands::cmd_study(*kind, &cfg, &out)?;
            println!("{}", verdict.summary());
            if !verdict.passed {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Plot { csv, columns, output } => {
            let target = output.clone().unwrap_or_else(|| csv.with_extension("svg"));
            println!("{}", commands::cmd_plot(csv, columns, &target)?);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}: {e}", e.code());
            e.exit_code()
        }
    }
}
