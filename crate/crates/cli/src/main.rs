//! `kge`: train, calibrate, and evaluate knowledge graph embedding models.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use kge_cli::{exit_code_for, run_pipeline, stages, RunConfig, EXIT_USAGE, MANIFEST_FILE};
use kge_core::graph::{Split, SplitSpec};
use kge_core::models::ModelKind;
use kge_core::training::TrainConfig;
use kge_core::{KgeError, Result};

#[derive(Parser)]
#[command(
    name = "kge",
    about = "Knowledge graph embedding training, calibration, and evaluation",
    version
)]
struct Cli {
    /// Worker thread count (also read from KGE_THREADS). Execution is
    /// sequential either way; 1 is the deterministic reference mode.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a triple TSV, split it, and write a graph checkpoint
    Ingest(IngestCmd),
    /// Train one model on a graph checkpoint
    Train(TrainCmd),
    /// Grid-search hyperparameters and keep the best model
    Grid(GridCmd),
    /// Fit a calibrator on a trained model's validation scores
    Calibrate(CalibrateCmd),
    /// Closed-world evaluation: accuracy, ECE, reliability diagram
    EvalCwa(EvalCwaCmd),
    /// Generate high-confidence open-world candidate triples
    PredictOwa(PredictOwaCmd),
    /// Score open-world candidates against a ground-truth label file
    EvalOwa(EvalOwaCmd),
    /// Summarize the artifacts of a pipeline run directory
    Report(ReportCmd),
    /// Run the full pipeline from a TOML run config
    Run(RunCmd),
}

#[derive(Args)]
struct IngestCmd {
    /// Tab-separated head/relation/tail triples, one per line
    #[arg(long)]
    triples: PathBuf,
    #[arg(long)]
    remove_inverses: bool,
    /// Bidirectional overlap at or above this drops the larger relation
    #[arg(long, default_value_t = 0.8)]
    inverse_threshold: f64,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    valid_fraction: f64,
    #[arg(long, default_value_t = 0.1)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output graph checkpoint (JSON)
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    graph: PathBuf,
    /// transe, transh, distmult, or complex
    #[arg(long)]
    kind: String,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    negatives_per_positive: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model checkpoint (binary)
    #[arg(long)]
    output: PathBuf,
    /// Optional JSON training summary
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct GridCmd {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct CalibrateCmd {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// softmax, platt, isotonic, vector, or matrix
    #[arg(long)]
    method: String,
    #[arg(long, default_value = "valid")]
    split: String,
    /// Ridge weight on the affine scaling matrix
    #[arg(long, default_value_t = 0.0)]
    l2: f64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalCwaCmd {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    calibrator: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long)]
    output: PathBuf,
    /// Optional reliability table (CSV)
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Optional reliability diagram (SVG)
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct PredictOwaCmd {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    calibrator: PathBuf,
    /// Tab-separated head/tail entity labels; defaults to test-split pairs
    #[arg(long)]
    queries: Option<PathBuf>,
    #[arg(long, default_value_t = 0.8)]
    threshold: f64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalOwaCmd {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    candidates: PathBuf,
    /// Tab-separated head/relation/tail/verdict records
    #[arg(long)]
    labels: PathBuf,
    #[arg(long, default_value_t = 10)]
    bins: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct ReportCmd {
    /// A run directory produced by `kge run`
    #[arg(long)]
    run_dir: PathBuf,
}

#[derive(Args)]
struct RunCmd {
    /// TOML run config
    #[arg(long)]
    config: PathBuf,
    /// Override the config's output directory
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Override the config's global seed
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version output exits cleanly
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(EXIT_USAGE as u8);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    if let Err(e) = validate_threads(cli.threads) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_USAGE as u8);
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e) as u8)
        }
    }
}

fn validate_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(n) => n,
        None => match std::env::var("KGE_THREADS") {
            Ok(v) => v
                .parse()
                .map_err(|_| KgeError::Config(format!("invalid KGE_THREADS value '{v}'")))?,
            Err(_) => 1,
        },
    };
    if threads == 0 {
        return Err(KgeError::Config("thread count must be >= 1".into()));
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Ingest(cmd) => {
            let graph = stages::ingest(&stages::IngestArgs {
                triples: cmd.triples,
                remove_inverses: cmd.remove_inverses,
                inverse_threshold: cmd.inverse_threshold,
                split: SplitSpec {
                    train_fraction: cmd.train_fraction,
                    valid_fraction: cmd.valid_fraction,
                    test_fraction: cmd.test_fraction,
                    seed: cmd.seed,
                },
                output: cmd.output.clone(),
            })?;
            println!(
                "wrote {} ({} entities, {} relations, {}/{}/{} train/valid/test)",
                cmd.output.display(),
                graph.num_entities(),
                graph.num_relations(),
                graph.train().len(),
                graph.valid().len(),
                graph.test().len()
            );
        }
        Command::Train(cmd) => {
            let kind = ModelKind::from_str(&cmd.kind)?;
            let mut config = TrainConfig {
                seed: cmd.seed,
                ..TrainConfig::default_for(kind)
            };
            if let Some(v) = cmd.epochs {
                config.epochs = v;
            }
            if let Some(v) = cmd.batch_size {
                config.batch_size = v;
            }
            if let Some(v) = cmd.dim {
                config.dim = v;
            }
            if let Some(v) = cmd.negatives_per_positive {
                config.negatives_per_positive = v;
            }
            if let Some(v) = cmd.margin {
                config.margin = v;
            }
            if let Some(v) = cmd.learning_rate {
                config.learning_rate = v;
            }
            let report = stages::train_model(
                &cmd.graph,
                kind,
                &config,
                &cmd.output,
                cmd.summary.as_deref(),
            )?;
            println!(
                "wrote {} (validation accuracy {:.4})",
                cmd.output.display(),
                report.validation_accuracy
            );
        }
        Command::Grid(cmd) => {
            let kind = ModelKind::from_str(&cmd.kind)?;
            let (best, report) = stages::grid_model(
                &cmd.graph,
                kind,
                cmd.seed,
                &cmd.output,
                cmd.summary.as_deref(),
            )?;
            println!(
                "wrote {} (validation accuracy {:.4}, epochs {}, batch {}, dim {}, neg {}, margin {}, lr {})",
                cmd.output.display(),
                report.validation_accuracy,
                best.epochs,
                best.batch_size,
                best.dim,
                best.negatives_per_positive,
                best.margin,
                best.learning_rate
            );
        }
        Command::Calibrate(cmd) => {
            let split = Split::from_str(&cmd.split)?;
            stages::calibrate_model(
                &cmd.graph,
                &cmd.model,
                &cmd.method,
                split,
                cmd.l2,
                &cmd.output,
            )?;
            println!("wrote {}", cmd.output.display());
        }
        Command::EvalCwa(cmd) => {
            let report = stages::eval_cwa(&stages::EvalCwaArgs {
                graph: cmd.graph,
                model: cmd.model,
                calibrator: cmd.calibrator,
                split: Split::from_str(&cmd.split)?,
                bins: cmd.bins,
                output: cmd.output.clone(),
                csv: cmd.csv,
                svg: cmd.svg,
            })?;
            println!(
                "wrote {} (accuracy {:.4}, ECE {:.4}, n {})",
                cmd.output.display(),
                report.accuracy,
                report.ece,
                report.n
            );
        }
        Command::PredictOwa(cmd) => {
            let candidates = stages::predict_owa(
                &cmd.graph,
                &cmd.model,
                &cmd.calibrator,
                cmd.queries.as_deref(),
                cmd.threshold,
                &cmd.output,
            )?;
            println!(
                "wrote {} ({} candidates at threshold {})",
                cmd.output.display(),
                candidates.len(),
                cmd.threshold
            );
        }
        Command::EvalOwa(cmd) => {
            let eval = stages::eval_owa_stage(
                &cmd.graph,
                &cmd.candidates,
                &cmd.labels,
                cmd.bins,
                &cmd.output,
            )?;
            match (eval.accuracy, &eval.report) {
                (Some(acc), Some(report)) => println!(
                    "wrote {} (accuracy {:.4}, ECE {:.4}, {} evaluated, {} unsure excluded)",
                    cmd.output.display(),
                    acc,
                    report.ece,
                    eval.evaluated,
                    eval.excluded_unsure
                ),
                _ => println!(
                    "wrote {} (no decisive labels, {} unsure excluded)",
                    cmd.output.display(),
                    eval.excluded_unsure
                ),
            }
        }
        Command::Report(cmd) => {
            print_report(&cmd.run_dir)?;
        }
        Command::Run(cmd) => {
            let (mut config, text) = RunConfig::load(&cmd.config)?;
            if let Some(dir) = cmd.output_dir {
                config.output_dir = dir;
            }
            if let Some(seed) = cmd.seed {
                config.seed = seed;
            }
            let dir = run_pipeline(&config, &text)?;
            println!("run complete: {}", dir.display());
        }
    }
    Ok(())
}

fn print_report(run_dir: &std::path::Path) -> Result<()> {
    let manifest_path = run_dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path)
        .map_err(|e| KgeError::io(&manifest_path, e))?;
    let manifest: kge_cli::Manifest =
        serde_json::from_str(&text).map_err(|e| KgeError::Checkpoint(e.to_string()))?;
    println!("run: {}", run_dir.display());
    println!("created: {}", manifest.created_utc);
    println!("seed: {}  config hash: {}", manifest.seed, manifest.config_hash);
    println!("stages:");
    for stage in &manifest.stages {
        println!(
            "  {:<40} {:<7} {:>8.2}s  {}",
            stage.name,
            stage.status,
            stage.seconds,
            stage.artifacts.join(", ")
        );
        if let Some(err) = &stage.error {
            println!("    error: {err}");
        }
    }
    for stage in &manifest.stages {
        for artifact in &stage.artifacts {
            if artifact.starts_with("cwa-") && artifact.ends_with(".json") {
                let path = run_dir.join(artifact);
                let text =
                    std::fs::read_to_string(&path).map_err(|e| KgeError::io(&path, e))?;
                let report: kge_cli::CwaReport =
                    serde_json::from_str(&text).map_err(|e| KgeError::Checkpoint(e.to_string()))?;
                println!(
                    "{:<10} {:<9} accuracy {:.4}  ECE {:.4}  n {}",
                    report.model.to_string(),
                    report.calibrator,
                    report.accuracy,
                    report.ece,
                    report.n
                );
            }
        }
    }
    Ok(())
}
