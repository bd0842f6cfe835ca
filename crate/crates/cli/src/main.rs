use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qadapt_cli::config::TableName;
use qadapt_cli::{run, write_outcome, CliError, ExperimentConfig, Mode};

#[derive(Parser)]
#[command(name = "qadapt", version, about = "Compound adapter experiments and verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run with this single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Report directory (default: the config's `output`, else `reports`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Tolerance for the circuit equivalence check.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config in whatever mode it names.
    Run { config: PathBuf },
    /// Run the built-in verification suites.
    Verify,
    /// Print a structural table.
    Table {
        #[arg(value_enum)]
        name: TableName,
    },
    /// Run a grid sweep config.
    Sweep { config: PathBuf },
}

fn load(path: &Path, expect: Option<Mode>) -> Result<ExperimentConfig, CliError> {
    let cfg = ExperimentConfig::load(path)?;
    if let Some(mode) = expect {
        if cfg.mode != mode {
            return Err(CliError::Invalid {
                field: "mode".into(),
                message: format!("`sweep` needs a sweep config, got {:?}", cfg.mode).to_lowercase(),
            });
        }
    }
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let mut cfg = match &cli.command {
        Command::Run { config } => load(config, None)?,
        Command::Sweep { config } => load(config, Some(Mode::Sweep))?,
        Command::Verify => ExperimentConfig::new(Mode::Verify),
        Command::Table { name } => {
            let mut cfg = ExperimentConfig::new(Mode::Table);
            cfg.table.name = *name;
            if *name == TableName::ParamCounts {
                cfg.adapter.d = 768;
                cfg.adapter.r = 3;
            }
            cfg
        }
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(tol) = cli.tol {
        cfg.tolerances.equivalence = tol;
    }
    cfg.validate()?;
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("reports"));

    let outcome = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(e.to_string()))?
            .install(|| run(&cfg))?,
        None => run(&cfg)?,
    };
    write_outcome(&dir, &outcome, cfg.export)?;
    print!("{}", qadapt_cli::report::csv_body(&outcome.rows)?);
    eprintln!("wrote {} rows to {}", outcome.rows.len(), dir.display());
    Ok(!outcome.failed)
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
