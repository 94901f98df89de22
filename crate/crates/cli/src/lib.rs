//! Command-line driver for the decision engine.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 backend
//! error.

pub mod commands;
pub mod config;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use counsel::backtest::{AblationVariant, BaselineKind};
use counsel::error::Result;
use counsel::market::Date;

use commands::Ctx;
use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "counsel",
    version,
    about = "Agent-driven trading decision engine and backtester"
)]
pub struct Cli {
    /// Path to the JSON run configuration.
    #[arg(long, global = true, default_value = "config.json")]
    pub config: PathBuf,
    /// Master seed override (otherwise the config's `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory override (otherwise the config's `out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Completion backend override: `scripted:PATH` or `remote`.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and validate the configuration, echoing resolved values.
    Validate,
    /// Run the pipeline without trading; emit per-day direction calls.
    Forecast {
        #[arg(long)]
        asset: String,
        /// First prediction day (defaults to the test span start).
        #[arg(long)]
        from: Option<String>,
        /// Last prediction day (defaults to the test span end).
        #[arg(long)]
        to: Option<String>,
    },
    /// Backtest one asset over the test span.
    Backtest {
        #[arg(long)]
        asset: String,
        /// Run a rule-based or mean-variance baseline instead of the engine.
        #[arg(long, value_parser = clap::value_parser!(BaselineKind))]
        baseline: Option<BaselineKind>,
        /// Disable one component for the run.
        #[arg(long, value_parser = clap::value_parser!(AblationVariant))]
        ablate: Option<AblationVariant>,
    },
    /// Long-short portfolio over every configured asset.
    Portfolio {
        #[arg(long, value_parser = clap::value_parser!(AblationVariant))]
        ablate: Option<AblationVariant>,
    },
    /// Backtest one asset with a component disabled.
    Ablate {
        #[arg(long)]
        asset: String,
        #[arg(long, value_parser = clap::value_parser!(AblationVariant))]
        variant: AblationVariant,
    },
    /// Run a baseline strategy (markowitz uses every configured asset).
    Baseline {
        #[arg(long, value_parser = clap::value_parser!(BaselineKind))]
        kind: BaselineKind,
        #[arg(long)]
        asset: Option<String>,
    },
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(&cli.config)?;
    let base = cli
        .config
        .parent()
        .map(|p| {
            if p.as_os_str().is_empty() {
                PathBuf::from(".")
            } else {
                p.to_path_buf()
            }
        })
        .unwrap_or_else(|| PathBuf::from("."));
    let out_dir = commands::resolve_out_dir(&cfg, &base, cli.out);
    let ctx = Ctx {
        cfg,
        base,
        out_dir,
        seed: cli.seed,
        backend_flag: cli.backend,
    };
    match cli.command {
        Command::Validate => commands::cmd_validate(&ctx),
        Command::Forecast { asset, from, to } => {
            let parse_flag = |flag: Option<&str>| {
                flag.map(Date::new)
                    .transpose()
                    .map_err(|e| counsel::Error::Config(e.to_string()))
            };
            let from = parse_flag(from.as_deref())?;
            let to = parse_flag(to.as_deref())?;
            commands::cmd_forecast(&ctx, &asset, from, to)
        }
        Command::Backtest {
            asset,
            baseline,
            ablate,
        } => commands::cmd_backtest(&ctx, &asset, baseline, ablate),
        Command::Portfolio { ablate } => commands::cmd_portfolio(&ctx, ablate),
        Command::Ablate { asset, variant } => commands::cmd_ablate(&ctx, &asset, variant),
        Command::Baseline { kind, asset } => commands::cmd_baseline(&ctx, kind, asset.as_deref()),
    }
}

/// Runs a parsed invocation, returning the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
