use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use transmode::pipeline::{cmd_decompose, cmd_eval, cmd_ingest, cmd_predict, cmd_train, PipelineConfig};

/// Transportation mode classification for GPS trajectories.
#[derive(Parser)]
#[command(version)]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Train partitions concurrently.
    #[arg(long, global = true)]
    parallel: Option<bool>,
    /// Partition polygons (JSON).
    #[arg(long, global = true)]
    partitions: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a GeoLife tree into a labeled JSON Lines dataset.
    Ingest {
        geolife_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model (or one per partition) into a directory.
    Train {
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a model on a labeled dataset and print the report as JSON.
    Eval {
        dataset: PathBuf,
        /// Checkpoint, manifest, or training output directory.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write one predicted mode per trajectory as JSON Lines.
    Predict {
        dataset: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the STL components of one trajectory's timestamps as CSV.
    Decompose {
        dataset: PathBuf,
        #[arg(long)]
        traj_id: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json<T: serde::Serialize>(value: &T) -> transmode::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        // a reader that went away (`| head`) is not a failure of the command
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(io_error(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> transmode::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(parallel) = cli.parallel {
        cfg.parallel = parallel;
    }
    if let Some(p) = cli.partitions {
        cfg.partition_file = Some(p);
    }
    cfg.validate()?;

    match cli.command {
        Command::Ingest { geolife_dir, out } => print_json(&cmd_ingest(&geolife_dir, &cfg, &out)?),
        Command::Train { dataset, out } => print_json(&cmd_train(&dataset, &cfg, &out)?),
        Command::Eval { dataset, model, out } => {
            let report = cmd_eval(&dataset, &model, &cfg)?;
            if let Some(out) = out {
                let text = serde_json::to_string_pretty(&report)? + "\n";
                std::fs::write(&out, text).map_err(|e| io_error(&out, e))?;
            }
            print_json(&report)
        }
        Command::Predict { dataset, model, out } => {
            let n = cmd_predict(&dataset, &model, &cfg, &out)?;
            print_json(&serde_json::json!({ "predictions": n }))
        }
        Command::Decompose { dataset, traj_id, out } => {
            let n = cmd_decompose(&dataset, &traj_id, &cfg, &out)?;
            print_json(&serde_json::json!({ "rows": n }))
        }
    }
}

fn io_error(path: &Path, source: std::io::Error) -> transmode::Error {
    transmode::Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            ExitCode::FAILURE
        }
    }
}
