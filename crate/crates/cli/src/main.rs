//! Command-line entry point: synthesize data, train, evaluate, visualize.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Logger;
use error::CliError;

#[derive(Parser)]
#[command(
    name = "kan-mcp",
    version,
    about = "Spline-network multimodal fusion with bottleneck encoders and Pareto-coordinated training"
)]
struct Cli {
    /// Prefix log lines with wall-clock timestamps (off by default so
    /// reruns are byte-identical).
    #[arg(long, global = true)]
    timestamps: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multimodal dataset as CSV files.
    Synth {
        /// Synthesis spec (key = value lines).
        #[arg(long)]
        spec: PathBuf,
        /// Output dataset directory (created if absent).
        #[arg(long)]
        out: PathBuf,
    },
    /// Train on a dataset directory and write run artifacts.
    Train {
        /// Training configuration (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Dataset directory (text/audio/visual/labels.csv + manifest).
        #[arg(long)]
        data: PathBuf,
        /// Output directory for the checkpoint, reports and logs.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's gradient-coordination switch (on|off).
        #[arg(long)]
        mcpareto: Option<String>,
    },
    /// Evaluate a checkpoint on its dataset's test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Optional directory for report.txt / report.json.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Evaluation worker threads.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Render the attribution-coded network diagram (.svg or .dot).
    Viz {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output file; the extension selects the format.
        #[arg(long)]
        out: PathBuf,
        /// Also render per-edge function panels for this head layer.
        #[arg(long)]
        edges: Option<usize>,
        /// Output file for the edge-function panels.
        #[arg(long)]
        edges_out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let log = Logger::new(cli.timestamps);
    match cli.command {
        Command::Synth { spec, out } => {
            let spec = config::load_synth_spec(&spec)?;
            commands::cmd_synth(&spec, &out, &log)
        }
        Command::Train {
            config: config_path,
            data,
            out,
            mcpareto,
        } => {
            let mut hyper = config::load_run_config(&config_path)?;
            if let Some(flag) = mcpareto {
                hyper.mcpareto = match flag.as_str() {
                    "on" => true,
                    "off" => false,
                    other => {
                        return Err(CliError::Usage(format!(
                            "--mcpareto must be on or off, got `{other}`"
                        )))
                    }
                };
            }
            commands::cmd_train(hyper, &data, &out, &log)
        }
        Command::Eval {
            checkpoint,
            data,
            out,
            workers,
        } => commands::cmd_eval(&checkpoint, &data, out.as_deref(), workers, &log),
        Command::Viz {
            checkpoint,
            data,
            out,
            edges,
            edges_out,
        } => commands::cmd_viz(&checkpoint, &data, &out, edges, edges_out.as_deref(), &log),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}: {e}", e.class());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
