use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use corrcast_cli::commands::{self, Context, PredictOptions};
use corrcast_cli::config::RunConfig;
use corrcast_core::correlation::MonthKey;

/// Text-derived stock/bond correlation forecasts: data preparation,
/// prediction, backtests and hypothesis tests.
#[derive(Parser)]
#[command(name = "corrcast", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, default_value = "corrcast.toml", global = true)]
    config: PathBuf,
    /// Root seed; overrides `seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize price files and the article corpus into the data directory.
    Ingest,
    /// Select the best bond regression and backfill the bond series.
    ReconstructBond,
    /// Compute realized monthly correlations for every tracked pair.
    RealizedCorr,
    /// Generate predicted correlation series.
    Predict {
        /// Predictor to run (baseline, classifier, remote); repeatable.
        #[arg(long = "predictor")]
        predictors: Vec<String>,
        #[arg(long)]
        start: Option<MonthKey>,
        #[arg(long)]
        end: Option<MonthKey>,
    },
    /// Backtest minimum-variance portfolios and write Sharpe tables.
    Simulate,
    /// Run the RMSE hypothesis tests.
    Test,
    /// Write plot data for errors and portfolio values.
    Report,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(&cli.config)?;
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    config.validate()?;
    let ctx = Context::new(config);
    match cli.command {
        Command::Ingest => {
            let s = commands::run_stage(&ctx, "prices", commands::cmd_ingest)?;
            println!(
                "ingested {} tickers and {} articles ({} files changed)",
                s.tickers, s.articles, s.files_changed
            );
        }
        Command::ReconstructBond => {
            let m = commands::run_stage(&ctx, "bond", commands::cmd_reconstruct_bond)?;
            println!("selected subset: {}", m.predictors.join(", "));
            println!("intercept: {}", m.intercept());
            for (p, b) in m.predictors.iter().zip(m.slopes()) {
                println!("  {p}: {b}");
            }
            println!("out-of-sample R^2: {:.6}", m.out_of_sample_r2);
        }
        Command::RealizedCorr => {
            for (path, n) in commands::run_stage(&ctx, "correlations", commands::cmd_realized_corr)? {
                println!("{}: {n} months", path.display());
            }
        }
        Command::Predict { predictors, start, end } => {
            let options = PredictOptions { predictors, start, end };
            let files = commands::run_stage(&ctx, "predictions", |c| commands::cmd_predict(c, &options))?;
            for f in files {
                println!("{}: {} months ({} missing)", f.path.display(), f.rows, f.missing_months);
            }
        }
        Command::Simulate => {
            let s = commands::run_stage(&ctx, "simulate", commands::cmd_simulate)?;
            for path in s.sharpe_tables {
                println!("{}", path.display());
                print!("{}", std::fs::read_to_string(&path)?);
            }
        }
        Command::Test => {
            for r in commands::run_stage(&ctx, "tests", commands::cmd_test)? {
                println!("{}", commands::describe_grid(&r));
            }
        }
        Command::Report => {
            let s = commands::run_stage(&ctx, "report", commands::cmd_report)?;
            for (path, rows) in s.error_files {
                println!("{}: {rows} months", path.display());
            }
            for path in s.value_files {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
