use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use infosel::config::RunConfig;
use infosel::pipeline::{run_pipeline, run_step, Layout, Step};
use infosel::Result;

/// Entropy-based informative sample selection: train a baseline, rank
/// training samples by prediction entropy, search the informative proportion
/// with Bayesian optimization, and compare both models.
#[derive(Debug, Parser)]
#[command(name = "infosel", version)]
struct Cli {
    /// JSON run configuration; defaults apply to omitted fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Run seed, overriding the configuration's.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build or load the internal and external datasets.
    Generate,
    /// Assign whole groups to train/validation/test.
    Split,
    /// Train the Baseline on the full training split.
    TrainBaseline,
    /// Score training samples by Baseline prediction entropy.
    Score,
    /// Search the informative proportion.
    Optimize,
    /// Retrain the Entropy model at the chosen proportion.
    TrainEntropy,
    /// Pick thresholds on validation and evaluate both models.
    Evaluate,
    /// Recall significance tests and the entropy gap test.
    Compare,
    /// Figure data: embeddings, histograms, confusion and Sankey tables.
    Export,
    /// Every stage, plus the run manifest.
    Run,
}

impl Command {
    fn step(&self) -> Option<Step> {
        Some(match self {
            Command::Generate => Step::Generate,
            Command::Split => Step::Split,
            Command::TrainBaseline => Step::TrainBaseline,
            Command::Score => Step::Score,
            Command::Optimize => Step::Optimize,
            Command::TrainEntropy => Step::TrainEntropy,
            Command::Evaluate => Step::Evaluate,
            Command::Compare => Step::Compare,
            Command::Export => Step::Export,
            Command::Run => return None,
        })
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command.step() {
        Some(step) => {
            for path in run_step(step, &cfg, &Layout::new(&cli.out))? {
                println!("wrote {}", path.display());
            }
        }
        None => {
            let m = run_pipeline(&cfg, &cli.out)?;
            println!(
                "informative proportion {:.4} ({} informative, {} redundant of {}); best validation loss {:.6}",
                m.informative_proportion.unwrap_or(f64::NAN),
                m.informative_count.unwrap_or(0),
                m.redundant_count.unwrap_or(0),
                m.train_count.unwrap_or(0),
                m.best_validation_loss.unwrap_or(f64::NAN),
            );
            println!("{} artifacts; manifest at {}", m.artifacts.len(), Layout::new(&cli.out).manifest().display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
