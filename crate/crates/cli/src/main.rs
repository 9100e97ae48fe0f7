use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use motion_bench::parallel::Execution;
use motion_bench::pipeline::{self, DATASET_FILE, LOGS_DIR, MODELS_DIR, REPORT_DIR};
use motion_bench::{Error, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(
    name = "motion-bench",
    version,
    about = "Motion prediction and robot collaboration benchmark"
)]
struct Cli {
    /// Experiment config (JSON); omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Run trials on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the training dataset (<out>/dataset.csv).
    GenData,
    /// Pre-train the models (<out>/models/).
    Train {
        /// Dataset to train on [default: <out>/dataset.csv].
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run the paired trial grid (<out>/logs/).
    Run {
        /// Directory holding the model files [default: <out>/models].
        #[arg(long)]
        models: Option<PathBuf>,
    },
    /// Score the trial logs and write report tables (<out>/report/).
    Report {
        /// Directory holding the trial logs [default: <out>/logs].
        #[arg(long)]
        logs: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(), Error> {
    let out = &cli.out;
    match &cli.command {
        Command::GenData => {
            let config = load_config(cli)?;
            let n = pipeline::cmd_gen_data(&config, &out.join(DATASET_FILE))?;
            info!("generated {n} trajectories");
        }
        Command::Train { dataset } => {
            let config = load_config(cli)?;
            let dataset = dataset.clone().unwrap_or_else(|| out.join(DATASET_FILE));
            pipeline::cmd_train(&config, &dataset, &out.join(MODELS_DIR))?;
        }
        Command::Run { models } => {
            let config = load_config(cli)?;
            let models = models.clone().unwrap_or_else(|| out.join(MODELS_DIR));
            let execution = if cli.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            };
            let summary = pipeline::cmd_run(&config, &models, &out.join(LOGS_DIR), execution)?;
            info!(
                "{} trials written, {} already complete",
                summary.written, summary.skipped
            );
        }
        Command::Report { logs } => {
            // the report reads its config from the logs themselves
            let logs = logs.clone().unwrap_or_else(|| out.join(LOGS_DIR));
            let report = pipeline::cmd_report(&logs, &out.join(REPORT_DIR))?;
            for (model, cell) in &report.per_model {
                let err = cell
                    .prediction_error
                    .map_or_else(|| "n/a".to_string(), |s| format!("{:.4}", s.mean));
                println!(
                    "{model:<18} prediction_error {err:>7}  safety {:.4}  efficiency {:.4}",
                    cell.safety.mean, cell.efficiency.mean
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
