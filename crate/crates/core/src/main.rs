use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use te_mdp::io::{self, SolveOptions, Status};
use te_mdp::Error;

#[derive(Parser)]
#[command(name = "te-mdp", version, about = "Transfer-entropy regularized policy synthesis for labeled MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    scenario: PathBuf,
    /// Rescale transition rows whose sum is off by at most 1e-9.
    #[arg(long)]
    renormalize: bool,
}

#[derive(Args)]
struct Overrides {
    #[arg(long, conflicts_with = "target_prob")]
    beta: Option<f64>,
    #[arg(long)]
    target_prob: Option<f64>,
    #[arg(long)]
    memory: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the product and print its sizes.
    Compile {
        #[command(flatten)]
        common: Common,
        /// Write the pruned product as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve and write a policy file.
    Solve {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve over a grid of β and print the trade-off table as CSV.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated β values.
        #[arg(long, value_delimiter = ',', conflicts_with = "log_grid")]
        betas: Vec<f64>,
        /// `lo,hi,n`: n log-spaced values from lo to hi.
        #[arg(long, value_delimiter = ',')]
        log_grid: Vec<f64>,
        #[arg(long)]
        memory: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Agent-cell marginals of a policy at the given times, as CSV.
    ExportMarginals {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a policy file against its scenario.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
    },
}

fn with_output(out: Option<&PathBuf>, f: impl FnOnce(&mut dyn std::io::Write) -> Result<Status, Error>) -> Result<Status, Error> {
    match out {
        Some(path) => {
            let mut buf = Vec::new();
            let status = f(&mut buf)?;
            std::fs::write(path, buf).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
            Ok(status)
        }
        None => f(&mut std::io::stdout().lock()),
    }
}

fn run(cli: Cli) -> Result<Status, Error> {
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Compile { common, out } => io::cmd_compile(&common.scenario, common.renormalize, out.as_deref(), &mut stdout),
        Command::Solve { common, overrides, out } => {
            let opts = SolveOptions {
                beta: overrides.beta,
                target_prob: overrides.target_prob,
                memory: overrides.memory,
                seed: overrides.seed,
                renormalize: common.renormalize,
            };
            io::cmd_solve(&common.scenario, &opts, out.as_deref(), &mut stdout)
        }
        Command::Sweep { common, betas, log_grid, memory, seed, out } => {
            let grid = match log_grid[..] {
                [] => betas,
                [lo, hi, n] if n >= 1.0 && n.fract() == 0.0 => io::log_grid(lo, hi, n as usize)?,
                _ => return Err(Error::Config("--log-grid takes lo,hi,n".into())),
            };
            let opts = SolveOptions { memory, seed, renormalize: common.renormalize, ..Default::default() };
            drop(stdout);
            with_output(out.as_ref(), |w| io::cmd_sweep(&common.scenario, &grid, &opts, w))
        }
        Command::ExportMarginals { common, policy, times, out } => {
            drop(stdout);
            with_output(out.as_ref(), |w| {
                io::cmd_export_marginals(&common.scenario, &policy, &times, common.renormalize, w)
            })
        }
        Command::Eval { common, policy, beta } => {
            io::cmd_eval(&common.scenario, &policy, beta, common.renormalize, &mut stdout)
        }
    }
}

fn main() -> ExitCode {
    let result = run(Cli::parse());
    if let Err(Error::Io { source, .. }) = &result {
        if source.kind() == std::io::ErrorKind::BrokenPipe {
            return ExitCode::SUCCESS;
        }
    }
    if let Err(e) = &result {
        eprintln!("error: {e}");
    } else if let Ok(Status::NotConverged) = result {
        eprintln!("warning: the solver stopped at its iteration limit before converging");
    }
    ExitCode::from(io::exit_code(&result) as u8)
}
