use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use nehari_cli::{
    cmd_pohozaev, cmd_sobolev, cmd_solve, cmd_sweep_mu, cmd_validate, parse_ladder, parse_mu_list,
    resolve_out, EXIT_FAILURE,
};

/// Ground states of coupled Kirchhoff systems on a periodic box.
#[derive(Parser)]
#[command(name = "nehari", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize the energy over the Nehari manifold.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; falls back to NEHARI_OUT.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Zero timing fields so reruns give identical reports.
        #[arg(long)]
        deterministic: bool,
    },
    /// Critical level against the compactness bound over a list of mu.
    SweepMu {
        #[arg(long)]
        config: PathBuf,
        /// Comma separated increasing values, e.g. 1,2,4,8.
        #[arg(long, default_value = "1,2,4,8,16,32")]
        mu: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Force a single worker.
        #[arg(long)]
        deterministic: bool,
    },
    /// Check the structural hypotheses on the configured functions.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Also write validation.json and a manifest here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pohozaev residual, and the nonexistence certificate when p = q = 6.
    Pohozaev {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        u: PathBuf,
        #[arg(long)]
        v: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the best Sobolev constant by Richardson extrapolation.
    Sobolev {
        /// Refinement ladder as L:n pairs, e.g. 8:16,16:45,32:128.
        #[arg(long)]
        ladder: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli, argv: Vec<String>) -> Result<i32> {
    match cli.command {
        Command::Solve {
            config,
            out,
            deterministic,
        } => cmd_solve(&config, &resolve_out(out.as_deref())?, deterministic, argv),
        Command::SweepMu {
            config,
            mu,
            out,
            workers,
            deterministic,
        } => {
            let mu = parse_mu_list(&mu)?;
            cmd_sweep_mu(
                &config,
                &mu,
                &resolve_out(out.as_deref())?,
                workers,
                deterministic,
                argv,
            )
        }
        Command::Validate { config, out } => cmd_validate(&config, out.as_deref(), argv),
        Command::Pohozaev { config, u, v, out } => {
            cmd_pohozaev(&config, &u, &v, &resolve_out(out.as_deref())?, argv)
        }
        Command::Sobolev { ladder, out } => {
            let ladder = ladder.as_deref().map(parse_ladder).transpose()?;
            cmd_sobolev(ladder.as_deref(), out.as_deref(), argv)
        }
    }
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    match run(cli, argv) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}
