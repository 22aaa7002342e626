use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use microforge::{default_job_file, run_job, JobOptions, Task};

#[derive(Parser)]
#[command(name = "microforge", version, about = "Synthetic microstructure images with exact ground truth")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct JobArgs {
    /// Job file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the job file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; nothing is written outside it.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Allow jobs above 10^9 voxels.
    #[arg(long)]
    force_large: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Voronoi min-cut or fractional Brownian cracks blended into a background.
    Crack(JobArgs),
    /// FIB-SEM slice stack with shine-through of a Boolean or given solid.
    Sem {
        #[command(flatten)]
        job: JobArgs,
        /// Match every slice's gray-value histogram to this PNG.
        #[arg(long)]
        match_histogram: Option<PathBuf>,
    },
    /// Boolean grain model as a solid mask plus grain list.
    Boolean(JobArgs),
    /// Face-milled surface height map.
    Milling(JobArgs),
    /// Crack segmentation of an existing volume.
    Segment(JobArgs),
    /// Generate, segment and score; one CSV row per replicate.
    Eval(JobArgs),
    /// Print the complete default job file for a task.
    Defaults {
        #[arg(value_enum)]
        task: Task,
    },
}

fn options(a: JobArgs, match_histogram: Option<PathBuf>) -> JobOptions {
    JobOptions { config: a.config, seed: a.seed, out: a.out, threads: a.threads, force_large: a.force_large, match_histogram }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (task, opts) = match cli.command {
        Command::Crack(a) => (Task::Crack, options(a, None)),
        Command::Sem { job, match_histogram } => (Task::Sem, options(job, match_histogram)),
        Command::Boolean(a) => (Task::Boolean, options(a, None)),
        Command::Milling(a) => (Task::Milling, options(a, None)),
        Command::Segment(a) => (Task::Segment, options(a, None)),
        Command::Eval(a) => (Task::Eval, options(a, None)),
        Command::Defaults { task } => {
            let text = serde_json::to_string_pretty(&default_job_file(task)).expect("defaults serialize");
            // a closed pipe (e.g. `| head`) is not an error
            let _ = writeln!(std::io::stdout(), "{text}");
            return ExitCode::SUCCESS;
        }
    };
    match run_job(task, &opts) {
        Ok(m) => {
            println!("{}: {} artifacts in {}", m.task, m.artifacts.len(), opts.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
