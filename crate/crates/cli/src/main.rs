use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use emcc_cli::commands::{run, Command, EmOverrides};
use emcc_cli::{CliError, ExitCode};

/// Multi-study causal EM: fit, check compatibility, bound counterfactuals.
///
/// Exit codes: 0 success, 1 other failure, 2 incompatible studies,
/// 3 I/O failure, 4 invalid input. Failures print one JSON error record
/// to stderr.
#[derive(Debug, Parser)]
#[command(name = "emcc", version)]
struct Cli {
    /// Worker threads for the parallel parts (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct EmArgs {
    /// Master seed, overriding the manifest.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of EM restarts.
    #[arg(long)]
    restarts: Option<usize>,
    /// Relative log-likelihood convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Absolute compatibility tolerance on the log-likelihood gap.
    #[arg(long)]
    compat_tol: Option<f64>,
}

impl From<EmArgs> for EmOverrides {
    fn from(a: EmArgs) -> Self {
        EmOverrides {
            seed: a.seed,
            restarts: a.restarts,
            tol: a.tol,
            compat_tol: a.compat_tol,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Fit all studies jointly and write the retained parameter set.
    Fit {
        manifest: PathBuf,
        #[command(flatten)]
        em: EmArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit and report the compatibility verdict only.
    Check {
        manifest: PathBuf,
        #[command(flatten)]
        em: EmArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bound the manifest's queries over a fitted parameter set.
    Query {
        manifest: PathBuf,
        /// Fit result from `emcc fit`; fits afresh when omitted.
        #[arg(long)]
        fit: Option<PathBuf>,
        #[command(flatten)]
        em: EmArgs,
        /// Round bounds and points to two decimals.
        #[arg(long)]
        paper_rounding: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the synthetic benchmark.
    Bench {
        /// JSON configuration; missing fields take their defaults.
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        restarts: Option<usize>,
        /// Number of sampled models.
        #[arg(long)]
        models: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Brute-force grid bounds for a small model.
    Oracle {
        manifest: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        grid_step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Fit { manifest, em, out } => Command::Fit {
                manifest,
                em: em.into(),
                out,
            },
            Cmd::Check { manifest, em, out } => Command::Check {
                manifest,
                em: em.into(),
                out,
            },
            Cmd::Query {
                manifest,
                fit,
                em,
                paper_rounding,
                out,
            } => Command::Query {
                manifest,
                fit,
                em: em.into(),
                paper_rounding,
                out,
            },
            Cmd::Bench {
                config,
                seed,
                restarts,
                models,
                out,
            } => Command::Bench {
                config,
                seed,
                restarts,
                models,
                out,
            },
            Cmd::Oracle {
                manifest,
                grid_step,
                out,
            } => Command::Oracle {
                manifest,
                grid_step,
                out,
            },
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let err = CliError::new(ExitCode::InvalidInput, "usage", e.to_string().trim_end());
            eprintln!("{}", err.to_json());
            std::process::exit(err.exit.code());
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match run(&cli.command.into()) {
        Ok((exit, message, written)) => {
            println!("{message}");
            for p in written {
                log::info!("wrote {}", p.display());
            }
            std::process::exit(exit.code());
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            std::process::exit(e.exit.code());
        }
    }
}
