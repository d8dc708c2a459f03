//! `driftpfn`: generate drift datasets, train the in-context classifier,
//! evaluate it on benchmarks and export decision surfaces.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Training(String),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) | CliError::Io(_) => 3,
            CliError::Training(_) => 4,
        }
    }
}

impl From<drift_pfn::Error> for CliError {
    fn from(e: drift_pfn::Error) -> Self {
        use drift_pfn::Error as E;
        match e {
            E::Config(_) | E::Capacity(_) => CliError::Config(e.to_string()),
            E::TrainingFault { .. } => CliError::Training(e.to_string()),
            E::Io(io) => CliError::Io(io),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "driftpfn", version, about = "Drift-aware in-context classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct Common {
    /// JSON run configuration; defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of worker threads; 1 runs everything sequentially.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a configuration file with every default filled in.
    Init {
        /// Destination file; printed to stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample prior datasets, or write a named benchmark.
    Gen {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        benchmark: Option<String>,
        /// Number of prior datasets (overrides `gen.count`).
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the drift and static models.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        steps: Option<u64>,
        /// Continue from the checkpoints in the output directory.
        #[arg(long)]
        resume: bool,
        /// Train only `drift` or `static`.
        #[arg(long)]
        model: Option<String>,
    },
    /// Compare the trained models on benchmarks under Eval-Fix splits.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Evaluate this benchmark only.
        #[arg(long)]
        benchmark: Option<String>,
    },
    /// Export the drift model's decision surface on a 2-feature benchmark.
    Boundary {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        benchmark: Option<String>,
    },
}

fn load_config(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = common.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    Ok((cfg, out))
}

fn configure_workers(workers: Option<usize>) -> Result<drift_pfn::exec::Exec, CliError> {
    use drift_pfn::exec::Exec;
    match workers {
        Some(0) => Err(CliError::Config("--workers must be at least 1".into())),
        Some(1) => Ok(Exec::Sequential),
        #[cfg(feature = "parallel")]
        Some(n) => {
            // the global pool can only be built once per process
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            Ok(Exec::Parallel)
        }
        #[cfg(not(feature = "parallel"))]
        Some(_) => Ok(Exec::Sequential),
        None if Exec::is_parallel_available() => Ok(Exec::Parallel),
        None => Ok(Exec::Sequential),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Init { out } => run::init(out.as_deref()),
        Command::Gen { common, benchmark, count } => {
            let (mut cfg, out) = load_config(&common)?;
            if let Some(c) = count {
                cfg.gen.count = c;
            }
            let exec = configure_workers(common.workers)?;
            run::gen(&cfg, &out, benchmark.as_deref(), exec)
        }
        Command::Train { common, steps, resume, model } => {
            let (mut cfg, out) = load_config(&common)?;
            if let Some(s) = steps {
                cfg.training.steps = s;
            }
            let exec = configure_workers(common.workers)?;
            run::train(&cfg, &out, resume, model.as_deref(), exec)
        }
        Command::Eval { common, benchmark } => {
            let (cfg, out) = load_config(&common)?;
            let exec = configure_workers(common.workers)?;
            run::eval(&cfg, &out, benchmark.as_deref(), exec)
        }
        Command::Boundary { common, benchmark } => {
            let (cfg, out) = load_config(&common)?;
            run::boundary(&cfg, &out, benchmark.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn errors_map_to_documented_exit_codes() {
        let fault = drift_pfn::Error::TrainingFault { step: 3, reason: "nan".into() };
        assert_eq!(CliError::from(fault).exit_code(), 4);
        assert_eq!(CliError::from(drift_pfn::Error::Config("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(drift_pfn::Error::Data("x".into())).exit_code(), 3);
        assert_eq!(CliError::Io(std::io::Error::other("x")).exit_code(), 3);
    }
}
