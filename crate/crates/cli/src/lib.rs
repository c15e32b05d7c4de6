//! Command-line front end: argument parsing, config loading and dispatch.

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::Context;
use crate::config::{load, parse_seed_list, ModeName, Overrides};
use crate::report::Status;

#[derive(Debug, Parser)]
#[command(
    name = "cdfbandit",
    version,
    about = "Learn multivariate CDFs from one-bit feedback"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Learn the CDF on a fixed grid and sweep the error.
    LearnCdf(CommonArgs),
    /// Learn the CDF of a bounded density on the whole cube.
    LearnCdfDensity(CommonArgs),
    /// Compare query counts against the naive grid and full-feedback baselines.
    Compare(CommonArgs),
    /// Learn near-optimal posted prices for a market.
    MarketPricing(CommonArgs),
    /// Run explore-then-commit and record regret traces.
    MarketRegret(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Comma-separated seeds, replacing the config's list.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    #[arg(long)]
    pub eps_prime: Option<f64>,
    /// Maximum one-bit queries per run.
    #[arg(long)]
    pub query_cap: Option<u64>,
}

impl CommonArgs {
    fn overrides(&self) -> anyhow::Result<Overrides> {
        Ok(Overrides {
            seeds: self.seeds.as_deref().map(parse_seed_list).transpose()?,
            mode: self.mode,
            eps_prime: self.eps_prime,
            query_cap: self.query_cap,
        })
    }
}

/// Runs one command and returns its overall status.
pub fn run(cli: Cli) -> anyhow::Result<Status> {
    let args = match &cli.command {
        Command::LearnCdf(a)
        | Command::LearnCdfDensity(a)
        | Command::Compare(a)
        | Command::MarketPricing(a)
        | Command::MarketRegret(a) => a,
    };
    let overrides = args.overrides()?;
    let ctx = Context::new(&args.out, Some(&args.config))?;
    let status = match &cli.command {
        Command::LearnCdf(_) => {
            let mut cfg: config::LearnCdfConfig = load(&args.config)?;
            cfg.apply(&overrides);
            commands::learn_cdf(&ctx, cfg)?.status
        }
        Command::LearnCdfDensity(_) => {
            let mut cfg: config::LearnCdfDensityConfig = load(&args.config)?;
            cfg.apply(&overrides);
            commands::learn_cdf_density_cmd(&ctx, cfg)?.status
        }
        Command::Compare(_) => {
            let mut cfg: config::CompareConfig = load(&args.config)?;
            cfg.apply(&overrides);
            commands::compare(&ctx, cfg)?.status
        }
        Command::MarketPricing(_) => {
            let mut cfg: config::MarketPricingConfig = load(&args.config)?;
            cfg.apply(&overrides);
            commands::market_pricing(&ctx, cfg)?.status
        }
        Command::MarketRegret(_) => {
            let mut cfg: config::MarketRegretConfig = load(&args.config)?;
            cfg.apply(&overrides)?;
            commands::market_regret(&ctx, cfg)?.status
        }
    };
    Ok(status)
}

/// Exit code for an error: 3 for an exhausted query budget, 2 for everything else.
pub fn error_exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<cdfbandit::Error>() {
        Some(cdfbandit::Error::BudgetExceeded { .. }) => 3,
        _ => 2,
    }
}
