use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use usc_entangle_cli::{run, Analysis, CliError, RunConfig};

#[derive(Parser)]
#[command(name = "usc-entangle", version, about = "Bell and GHZ photon-state generation with an ultrastrongly coupled qubit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV; overrides `out` in the config. Standard output when neither is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for grid and sweep parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Lowest eigenenergies against the qubit frequency.
    Spectrum,
    /// Numerical and closed-form effective couplings against the coupling strength.
    Geff,
    /// One protocol run: populations, qubit frequency and fidelity.
    Protocol,
    /// Fidelity time series for a list of decay rates.
    Sweep,
}

impl Command {
    fn analysis(self) -> Analysis {
        match self {
            Command::Spectrum => Analysis::Spectrum,
            Command::Geff => Analysis::Geff,
            Command::Protocol => Analysis::Protocol,
            Command::Sweep => Analysis::Sweep,
        }
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let resolved = config.resolve(cli.command.analysis())?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let table = run(&resolved)?;
    match cli.out.as_ref().or(config.out.as_ref()) {
        Some(path) => table.write(path),
        None => {
            std::io::stdout().lock().write_all(table.render().as_bytes())?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("usc-entangle: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
