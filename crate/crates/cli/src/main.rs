//! `stepdelay`: batch runs of scattering sweeps and time-delay experiments.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Experiment, ExperimentKind, RunConfig};
use run::RunInfo;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] stepdelay::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        use stepdelay::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 4,
            CliError::Core(e) => match e.root() {
                E::Config(_) | E::Threshold { .. } => 2,
                _ => 3,
            },
        }
    }
}

#[derive(Parser)]
#[command(
    name = "stepdelay",
    version,
    about = "Scattering and time delay for 1D steplike potentials"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Recorded in the manifest; nothing in the numerics is random.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Multiplies every tolerance.
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named in the config.
    Run { config: PathBuf },
    /// Run only the stationary sweep of the config.
    Sweep { config: PathBuf },
    /// Run the acceptance matrix.
    VerifyAll {
        #[arg(long)]
        quick: bool,
    },
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    RunConfig::parse(&text)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn real_main(cli: Cli) -> Result<ExitCode, CliError> {
    if !(cli.tol_scale > 0.0 && cli.tol_scale.is_finite()) {
        return Err(CliError::Config(format!(
            "--tol-scale must be positive, got {}",
            cli.tol_scale
        )));
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(CliError::config)?;
    }
    let (mut cfg, kind) = match &cli.command {
        Command::Run { config } => {
            let cfg = load(config)?;
            let kind = cfg.experiment.kind;
            (cfg, kind)
        }
        Command::Sweep { config } => {
            let mut cfg = load(config)?;
            cfg.experiment.kind = ExperimentKind::Sweep;
            cfg.validate()?;
            (cfg, ExperimentKind::Sweep)
        }
        Command::VerifyAll { quick } => {
            let cfg = RunConfig {
                experiment: Experiment {
                    kind: ExperimentKind::VerifyAll,
                    x0: None,
                    fit_window: None,
                    quick: *quick,
                },
                potential: None,
                packets: Vec::new(),
                energy: Default::default(),
                numerics: Default::default(),
                radii: Default::default(),
                output: Default::default(),
                tolerances: Default::default(),
            };
            (cfg, ExperimentKind::VerifyAll)
        }
    };
    cfg.scale_tolerances(cli.tol_scale);
    let dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    let outcome = run::execute(&cfg, kind, cli.tol_scale)?;
    let info = RunInfo {
        kind,
        seed: cli.seed,
        threads: rayon::current_num_threads(),
        tol_scale: cli.tol_scale,
    };
    run::write_outputs(&dir, &cfg, &info, &outcome.artifacts)?;
    for a in &outcome.artifacts {
        println!("{}", dir.join(&a.name).display());
    }
    if outcome.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &outcome.failures {
            eprintln!("failed: {f}");
        }
        Ok(ExitCode::from(3))
    }
}
