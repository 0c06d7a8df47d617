//! Batch front end for the `polyergo` toolkit: reads an INI run
//! configuration, runs validation, quadrature, Monte-Carlo and analysis
//! stages, and writes CSV tables, text summaries and plot-ready data.

// `!(a > b)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{CmdError, Ctx, Exit};
use config::{parse_list, RunConfig};
use output::OutDir;

#[derive(Debug, Parser)]
#[command(name = "polyergo", version, about = "Polynomial ergodicity experiments for gradient-drift diffusions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (INI).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `[run] out`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Top-level seed; overrides `[run] seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "POLYERGO_THREADS")]
    pub threads: Option<usize>,
    /// Highest moment order for `vq` and `hitting`.
    #[arg(long, global = true)]
    pub q_max: Option<u32>,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the potential against the growth and regularity assumptions.
    Validate,
    /// Hitting-time moments v^q by nested quadrature.
    Vq {
        /// Evaluation grid, e.g. `1, 2, 5` or `log:1:1e4:41`.
        #[arg(long)]
        xi: Option<String>,
    },
    /// Monte-Carlo hitting-time moments against the quadrature oracle.
    Hitting,
    /// Monte-Carlo state moments and the polynomial moment bound.
    Moments,
    /// Total-variation decay of the radial process.
    Tvdecay,
    /// Every stage in sequence with one pass/fail matrix.
    VerifyAll,
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> Exit {
    match execute(&cli) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit()
        }
    }
}

fn execute(cli: &Cli) -> Result<Exit, CmdError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CmdError::Usage("--config is required".into()))?;
    let mut cfg = RunConfig::load(path).map_err(|e| CmdError::Usage(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if cli.q_max == Some(0) {
        return Err(CmdError::Usage("--q-max must be at least 1".into()));
    }
    let xi = match &cli.command {
        Command::Vq { xi: Some(text) } => {
            Some(parse_list(text).map_err(|e| CmdError::Usage(format!("--xi: {e}")))?)
        }
        _ => None,
    };
    let out = OutDir::create(&cfg.out)?;
    let ctx = Ctx {
        cfg,
        out,
        quiet: cli.quiet,
        q_max: cli.q_max,
        xi,
        notes: Default::default(),
    };
    let body = || match cli.command {
        Command::Validate => commands::cmd_validate(&ctx),
        Command::Vq { .. } => commands::cmd_vq(&ctx),
        Command::Hitting => commands::cmd_hitting(&ctx),
        Command::Moments => commands::cmd_moments(&ctx),
        Command::Tvdecay => commands::cmd_tvdecay(&ctx),
        Command::VerifyAll => commands::cmd_verify_all(&ctx),
    };
    match cli.threads {
        Some(0) => Err(CmdError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CmdError::Usage(e.to_string()))?
            .install(body),
        None => body(),
    }
}
