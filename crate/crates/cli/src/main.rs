//! `querycast`: run the search-surveillance models over CSV inputs.

mod commands;
mod config;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};

use commands::Paths;
use config::RunConfig;
use output::Run;

#[derive(Parser)]
#[command(name = "querycast", version, about = "Disease tracking from search-query frequencies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    input_dir: PathBuf,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    country: Option<String>,
    /// Forecast only this horizon.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Also render every dated CSV as SVG.
    #[arg(long, global = true)]
    plots: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Symptom-weighted score and its historical baseline.
    Score,
    /// Score with the news-driven component removed.
    Adjust,
    /// Source-country model applied to the target country.
    Transfer,
    /// Query correlations and impact over several countries.
    Impact,
    /// Rolling AR-F, SAR-F and PER-F evaluation.
    Forecast,
    /// Write synthetic inputs with planted ground truth.
    Synth,
    /// Collect forecast summaries into one table.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Score => "score",
            Command::Adjust => "adjust",
            Command::Transfer => "transfer",
            Command::Impact => "impact",
            Command::Forecast => "forecast",
            Command::Synth => "synth",
            Command::Report => "report",
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(h) = cli.horizon {
        config.horizons = vec![h];
    }
    config.validate()?;
    let paths = Paths { input_dir: cli.input_dir.clone(), out_dir: cli.out_dir.clone() };
    let country = || cli.country.clone().ok_or_else(|| anyhow!("--country is required for {}", cli.command.name()));
    let mut run = Run::new(cli.command.name(), &config, &paths.out_dir, cli.plots);
    run.seeds.insert("seed".into(), config.seed);
    match cli.command {
        Command::Score => commands::score(&mut run, &config, &paths, &country()?)?,
        Command::Adjust => commands::adjust(&mut run, &config, &paths, &country()?)?,
        Command::Transfer => commands::transfer(&mut run, &config, &paths, &country()?)?,
        Command::Impact => commands::impact(&mut run, &config, &paths)?,
        Command::Forecast => commands::forecast(&mut run, &config, &paths, &country()?, config.seed)?,
        Command::Synth => commands::synth(&mut run, &config, config.seed)?,
        Command::Report => commands::report(&mut run, &config, &paths)?,
    }
    run.finish()
}

/// 3 for failures of the numerical machinery, 2 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    let numerical = e.chain().any(|c| c.downcast_ref::<querycast::Error>().is_some_and(querycast::Error::is_numerical));
    if numerical {
        3
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("querycast {}: {e:#}", cli.command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
