mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{EvalOverrides, Strategy};
use config::PipelineConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "groundloop", version, about = "Confidence-grounded prompting and plan supervision for manipulation")]
struct Cli {
    /// Pipeline config (JSON, `${VAR}` expanded from the environment).
    #[arg(long, short, global = true, default_value = "groundloop.json")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score the preprocessed point cloud.
    Fuse {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw markers for each mask onto the image.
    Annotate {
        /// Annotated PPM.
        #[arg(long)]
        out: PathBuf,
        /// Marker JSON; stdout when omitted.
        #[arg(long)]
        markers: Option<PathBuf>,
    },
    /// Ask the planner for an action plan.
    Plan {
        #[arg(long, value_enum, default_value = "direct")]
        strategy: Strategy,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a reviewed planning session and archive it.
    Supervise {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute the configured plan against one of the built-in tasks.
    Simulate {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        task: u8,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Step trace as JSONL.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Seeded end-to-end runs and their metrics.
    Eval {
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        no_reviewer: bool,
        #[arg(long)]
        fault_rate: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a labelled review dataset.
    Augment {
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = PipelineConfig::load(&cli.config)?;
    match cli.command {
        Command::Fuse { out } => commands::cmd_fuse(&cfg, out.as_deref()),
        Command::Annotate { out, markers } => commands::cmd_annotate(&cfg, &out, markers.as_deref()),
        Command::Plan { strategy, out } => commands::cmd_plan(&cfg, strategy, out.as_deref()),
        Command::Supervise { out } => commands::cmd_supervise(&cfg, out.as_deref()),
        Command::Simulate { task, out, trace } => commands::cmd_simulate(&cfg, task, out.as_deref(), trace.as_deref()),
        Command::Eval { runs, no_reviewer, fault_rate, out } => {
            commands::cmd_eval(&cfg, &EvalOverrides { runs, no_reviewer, fault_rate }, out.as_deref())
        }
        Command::Augment { count, seed, out } => commands::cmd_augment(&cfg, count, seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("groundloop: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
