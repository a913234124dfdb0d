//! The `brushwork` command line: one subcommand per pipeline stage.
//!
//! Machine-readable results go to stdout as JSON lines; logs and diagnostics
//! go to stderr. Exit status is 0 on success, 2 on usage errors and 1 when a
//! command fails.

use std::ffi::OsString;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

mod commands;

pub use commands::ingest_folder;

#[derive(Debug, Parser)]
#[command(name = "brushwork", version, about = "Painting-to-music retrieval tools")]
pub struct Cli {
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic paired corpus and a labeled clip set.
    GenToy(GenToyArgs),
    /// Scan a folder of audio and artwork into a library manifest.
    Ingest(IngestArgs),
    /// Train the painting/music correspondence scorer.
    TrainCorrespondence(TrainArgs),
    /// Train the audio embedder on a labeled clip manifest.
    TrainEmbedder(TrainArgs),
    /// Embed every 4 s chunk of a library into an index file.
    BuildIndex(BuildIndexArgs),
    /// Score one painting against one 4 s excerpt.
    Score(ScoreArgs),
    /// Two-step retrieval: visual filter, then nearest brush embedding.
    Retrieve(RetrieveArgs),
    /// Held-out accuracy of a trained model.
    Eval(EvalArgs),
    /// Run the live engine over HTTP.
    Serve(ServeArgs),
    /// Run a scripted session on a virtual clock and print its events.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct GenToyArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub tracks: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    /// Track length in seconds.
    #[arg(long, default_value_t = 40.0)]
    pub duration: f64,
    #[arg(long, default_value_t = 2)]
    pub tracks_per_album: usize,
    /// Labeled embedder clips per class; 0 skips the clip set.
    #[arg(long, default_value_t = 100)]
    pub clips_per_class: usize,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Folder holding `<name>.wav` files, each with a same-stem artwork image.
    pub folder: PathBuf,
    /// Manifest path to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Library manifest (correspondence) or labeled clip manifest (embedder).
    #[arg(long)]
    pub manifest: PathBuf,
    /// Checkpoint to write; the run record goes to `<out>.json`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    /// Held-out fraction.
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long)]
    pub eval_every: Option<usize>,
    /// Conv block widths, e.g. `8,8,16,16`.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    /// Correspondence projection width.
    #[arg(long)]
    pub projection: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BuildIndexArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Embedder checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Correspondence checkpoint to record next to the index.
    #[arg(long)]
    pub correspondence: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Correspondence checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub painting: PathBuf,
    #[arg(long)]
    pub audio: PathBuf,
    /// Excerpt start in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub start: f64,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub painting: PathBuf,
    #[arg(long)]
    pub brush: PathBuf,
    #[arg(long, default_value_t = brushwork::selection::DEFAULT_FRACTION)]
    pub fraction: f64,
    /// Correspondence checkpoint; defaults to the one recorded with the index.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Embedder checkpoint; defaults to the one recorded with the index.
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    /// Brush excerpt start in seconds.
    #[arg(long, default_value_t = 0.0)]
    pub start: f64,
    /// Also print the stage-1 survivors as a JSON line before the match.
    #[arg(long)]
    pub survivors: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Correspondence checkpoint, evaluated on pairs from a library manifest.
    #[arg(long, conflicts_with = "embedder", required_unless_present = "embedder")]
    pub model: Option<PathBuf>,
    /// Embedder checkpoint, evaluated on a labeled clip manifest.
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Evaluation pairs for the correspondence scorer.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    /// Evaluate every track or clip instead of the held-out split in the run record.
    #[arg(long)]
    pub all: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub script: PathBuf,
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub embedder: Option<PathBuf>,
    #[arg(long, default_value = "scenario1_crossfeed")]
    pub mode: brushwork_engine::Mode,
    #[arg(long, default_value_t = brushwork::selection::DEFAULT_FRACTION)]
    pub fraction: f64,
    /// Seconds between ticks.
    #[arg(long, default_value_t = 1.0)]
    pub tick: f64,
    /// Stop at this session time instead of the last scripted input.
    #[arg(long)]
    pub until: Option<f64>,
    /// Write the event log here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match execute(&cli, &mut out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

/// Run a parsed command, writing JSON lines to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let seed = cli.seed;
    match &cli.command {
        Command::GenToy(a) => commands::gen_toy(a, seed, out),
        Command::Ingest(a) => commands::ingest(a, out),
        Command::TrainCorrespondence(a) => commands::train_correspondence(a, seed, out),
        Command::TrainEmbedder(a) => commands::train_embedder(a, seed, out),
        Command::BuildIndex(a) => commands::build_index(a, out),
        Command::Score(a) => commands::score(a, out),
        Command::Retrieve(a) => commands::retrieve(a, out),
        Command::Eval(a) => commands::eval(a, seed, out),
        Command::Serve(a) => serve(a),
        Command::Replay(a) => commands::replay(a, out),
    }
}

fn serve(args: &ServeArgs) -> Result<()> {
    let addr = SocketAddr::new(args.host, args.port);
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(brushwork_engine::server::serve(addr, brushwork_engine::server::AppState::new()))?;
    Ok(())
}

pub(crate) fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    writeln!(out, "{}", serde_json::to_string(value)?)?;
    Ok(())
}

/// `<path>.json`, where a checkpoint's run record lives.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub(crate) fn check_positive(name: &str, value: Option<f64>) -> Result<()> {
    match value {
        Some(v) if !(v > 0.0 && v.is_finite()) => bail!("--{name} must be positive, got {v}"),
        _ => Ok(()),
    }
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Initialize logging from `BRUSHWORK_LOG` (error, info or debug; default info).
pub fn init_logging() {
    let env = env_logger::Env::new().filter_or("BRUSHWORK_LOG", "info");
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).target(env_logger::Target::Stderr).try_init();
}
