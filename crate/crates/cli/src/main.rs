// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod config;
mod run;

use config::RunConfig;

/// Batch runs of the cavity EPR model: effective and full dynamics,
/// homodyne correlation curves, regime checks.
#[derive(Parser, Debug)]
#[command(name = "cavity-epr", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML or JSON (by extension) run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads for independent series.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    /// Built-in system and cavity; config sections override it.
    #[arg(long, global = true)]
    preset: Option<Preset>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Gaussian evolution under the effective Hamiltonian.
    Effective,
    /// Full four-mode model against the effective prediction.
    FullCompare,
    /// Correlation signal for a list of coupling ratios.
    Figure2,
    /// Sequential two-pulse scheme.
    Scheme2,
    /// Validity inequalities with margins.
    Regimes,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Effective => "effective",
            Command::FullCompare => "full-compare",
            Command::Figure2 => "figure2",
            Command::Scheme2 => "scheme2",
            Command::Regimes => "regimes",
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Preset {
    Indium,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Physics(cavity_epr::Error),
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Io { .. } => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Physics(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl From<cavity_epr::Error> for CliError {
    fn from(e: cavity_epr::Error) -> Self {
        CliError::Physics(e)
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be >= 1".into()));
    }
    // a second global init only happens in-process; ignore it
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global();

    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = match cli.preset {
        Some(Preset::Indium) => cfg.over(RunConfig::indium()),
        None => cfg,
    };
    cfg.check()?;
    let cfg = cfg.resolved();

    std::fs::create_dir_all(&cli.out).map_err(|e| CliError::io(&cli.out, e))?;
    let out = run::Output::new(&cli.out, cli.command.name(), &cfg);
    match cli.command {
        Command::Effective => run::effective(&cfg, &out),
        Command::FullCompare => run::full_compare(&cfg, &out),
        Command::Figure2 => run::figure2(&cfg, &out),
        Command::Scheme2 => run::scheme2(&cfg, &out),
        Command::Regimes => run::regimes(&cfg, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Usage(_) = e {
                eprintln!("usage: cavity-epr <COMMAND> [--config PATH] [--out DIR] [--threads N] [--preset indium]");
            }
            ExitCode::from(e.exit_code())
        }
    }
}
