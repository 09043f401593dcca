use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;

/// Learning curves of random-feature regression under gradient flow.
#[derive(Debug, Parser)]
#[command(name = "rfgf", version, about)]
struct Cli {
    /// INI configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory (overrides output.directory).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Worker threads for mesh points and seeds.
    #[arg(long, global = true, value_name = "K")]
    threads: Option<usize>,

    /// Base random seed (overrides simulate.seed).
    #[arg(long, global = true, value_name = "S")]
    seed: Option<u64>,

    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    /// Override one configuration entry, e.g. `--set model.psi=2`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Hermite coefficients (mu, nu) of an activation.
    Coeffs {
        #[arg(long)]
        activation: Option<String>,
    },
    /// Solve the one-point system at x (and the two-point system with y).
    Solve {
        #[arg(long, allow_hyphen_values = true)]
        x: String,
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
    },
    /// Extract a spectral measure: g1, k, l0, v, h0 or w.
    Density {
        #[arg(long, default_value = "g1")]
        transform: String,
    },
    /// Analytic train/test curves over the configured time grid.
    Curve,
    /// Infinite-time limits of the errors.
    Limit,
    /// Error heatmaps over the configured sweep and time grid.
    Heatmap,
    /// Finite-dimensional simulation across seeds.
    Simulate,
    /// Monte Carlo check of the linear-pencil block traces.
    VerifyPencil {
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
    },
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(out) = cli.out {
        cfg.output.directory = out;
    }
    if let Some(seed) = cli.seed {
        cfg.simulate.seed = seed;
    }
    if cli.dump_config {
        print!("{}", cfg.to_ini_string());
        return Ok(());
    }
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global()?;
    }
    let Some(command) = cli.command else {
        anyhow::bail!(rfgf::Error::InvalidConfig("no command given (see --help)".into()));
    };
    match command {
        Command::Coeffs { activation } => commands::coeffs(&cfg, activation.as_deref()),
        Command::Solve { x, y } => commands::solve(&cfg, &x, y.as_deref()),
        Command::Density { transform } => commands::density(&cfg, &transform),
        Command::Curve => commands::curve(&cfg),
        Command::Limit => commands::limit(&cfg),
        Command::Heatmap => commands::heatmap(&cfg),
        Command::Simulate => commands::simulate(&cfg),
        Command::VerifyPencil { x, y, d, seeds } => {
            if let Some(x) = x {
                cfg.pencil.x = config::complex_arg(&x)?;
            }
            if let Some(y) = y {
                cfg.pencil.y = config::complex_arg(&y)?;
            }
            if let Some(d) = d {
                cfg.pencil.d = d;
            }
            if let Some(s) = seeds {
                cfg.pencil.seeds = s;
            }
            commands::verify_pencil(&cfg)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
