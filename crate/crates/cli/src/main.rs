//! `kakutani`: solve, check and benchmark fixed-point, game and market
//! instances stored as JSON.
//!
//! Exit status is 0 for a verified solution, 2 for a violation certificate
//! and 1 for errors or failed verification. Every flag can also be set
//! through an environment variable with the `KAKUTANI_` prefix, e.g.
//! `KAKUTANI_EPSILON=0.01`.

mod commands;
mod instance;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use commands::{Report, Settings, Status};
use instance::{fixture, read_json, Instance, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "kakutani", version, about = "Approximate fixed points, game and market equilibria")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args)]
struct Opts {
    /// Instance JSON (an outcome document for `check`).
    #[arg(long, global = true, env = "KAKUTANI_INSTANCE")]
    instance: Option<PathBuf>,
    /// Fixed-point accuracy.
    #[arg(long, global = true, env = "KAKUTANI_ALPHA")]
    alpha: Option<f64>,
    /// Equilibrium accuracy of games and economies.
    #[arg(long, global = true, env = "KAKUTANI_EPSILON")]
    epsilon: Option<f64>,
    /// Inner-ball radius of a correspondence, or the shrink of a game's
    /// constraint set.
    #[arg(long, global = true, env = "KAKUTANI_ETA")]
    eta: Option<f64>,
    /// Price floor of an economy.
    #[arg(long, global = true, env = "KAKUTANI_XI")]
    xi: Option<f64>,
    /// Grid exponent of each zoom window (2^ℓ points per side).
    #[arg(long, global = true, env = "KAKUTANI_GRID_EXP")]
    grid_exp: Option<u32>,
    #[arg(long, global = true, env = "KAKUTANI_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Write the JSON here instead of stdout.
    #[arg(long, global = true, env = "KAKUTANI_OUT")]
    out: Option<PathBuf>,
    #[arg(short, long, global = true, env = "KAKUTANI_VERBOSE")]
    verbose: bool,
    /// Seed for audit sampling.
    #[arg(long, global = true, env = "KAKUTANI_SEED")]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed point of a correspondence or a Brouwer map.
    SolveKakutani,
    /// Equilibrium of a concave game.
    SolveGame {
        /// Sample the utilities for concavity and Lipschitz violations first.
        #[arg(long)]
        audit: bool,
        #[arg(long, default_value_t = 400)]
        audit_trials: usize,
    },
    /// Equilibrium of an exchange economy.
    SolveWalras,
    /// Turn a generalized circuit into a two-player game instance.
    ReduceGcircuit,
    /// Re-verify an outcome document.
    Check,
    /// Time the solve of an instance, or of every catalog fixture.
    Bench {
        #[arg(long, default_value_t = 1)]
        repeat: usize,
    },
    /// Hölder and Lipschitz audit of a parametric maximization family.
    AuditBerge {
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Print a catalog instance.
    GenFixture { name: String },
}

fn validate(o: &Opts) -> Result<()> {
    for (name, v) in [("alpha", o.alpha), ("epsilon", o.epsilon), ("eta", o.eta), ("xi", o.xi)] {
        if let Some(v) = v {
            if !(v > 0.0 && v < 1.0) {
                bail!("--{name} must lie in (0, 1), got {v}");
            }
        }
    }
    if o.workers == 0 {
        bail!("--workers must be at least 1");
    }
    Ok(())
}

fn load(o: &Opts, ov: &Overrides) -> Result<(Instance, serde_json::Value)> {
    let Some(path) = &o.instance else { bail!("--instance is required") };
    Instance::parse(&read_json(path)?, ov)
}

fn run(cli: &Cli) -> Result<Report> {
    let o = &cli.opts;
    validate(o)?;
    let ov = Overrides { alpha: o.alpha, epsilon: o.epsilon, eta: o.eta, xi: o.xi };
    let st = Settings { overrides: ov.clone(), grid_exp: o.grid_exp, workers: o.workers, seed: o.seed };
    match &cli.command {
        Command::SolveKakutani => {
            let (inst, raw) = load(o, &ov)?;
            commands::solve_kakutani(inst, raw, &st)
        }
        Command::SolveGame { audit, audit_trials } => {
            let (inst, raw) = load(o, &ov)?;
            commands::solve_game(inst, raw, &st, audit.then_some(*audit_trials))
        }
        Command::SolveWalras => {
            let (inst, raw) = load(o, &ov)?;
            commands::solve_walras_cmd(inst, raw, &st)
        }
        Command::ReduceGcircuit => commands::reduce_gcircuit(load(o, &ov)?.0),
        Command::Check => {
            let Some(path) = &o.instance else { bail!("--instance is required") };
            commands::check(&read_json(path)?)
        }
        Command::Bench { repeat } => {
            let inst = o.instance.as_ref().map(|_| load(o, &ov)).transpose()?;
            commands::bench(inst, &st, *repeat)
        }
        Command::AuditBerge { pairs } => {
            let inst = o.instance.as_ref().map(|_| load(o, &ov)).transpose()?.map(|(i, _)| i);
            commands::audit_berge(inst, &st, *pairs)
        }
        Command::GenFixture { name } => Ok(Report {
            doc: fixture(name)?,
            status: Status::Solution,
            summary: format!("fixture {name}"),
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let report = match run(&cli) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let text = serde_json::to_string_pretty(&report.doc).expect("JSON values serialize");
    match &cli.opts.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, text + "\n") {
                eprintln!("error: writing {}: {e}", path.display());
                return ExitCode::from(1);
            }
        }
        None => println!("{text}"),
    }
    if cli.opts.verbose {
        if let Some(info) = report.doc.get("info").or_else(|| report.doc.get("stats")) {
            eprintln!("{info}");
        }
    }
    eprintln!("{} ({:.2}s)", report.summary, start.elapsed().as_secs_f64());
    ExitCode::from(report.status.exit_code() as u8)
}
