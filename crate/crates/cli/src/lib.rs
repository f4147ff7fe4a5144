//! `affmt` command line: corpus generation, consolidation, splitting,
//! experiment grids, evaluation, sampling and the annotation service.

pub mod commands;
pub mod experiment;
pub mod schema;

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::PathBuf;

use affmt_core::dataset::{SplitName, DEFAULT_REQUIRED_ANNOTATORS};
use affmt_core::preprocess::synth::SynthConfig;
use clap::{Parser, Subcommand};

use commands::CliError;

#[derive(Debug, Parser)]
#[command(name = "affmt", version, about = "Multi-task affect pipeline on synthetic or annotated corpora")]
pub struct Cli {
    /// Seed for corpus generation, splitting and sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output location (corpus root, results directory, sample directory or report file).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Config file: synthetic corpus settings for synth-data, the experiment spec for run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic annotated corpus.
    SynthData {
        #[arg(long)]
        subjects: Option<usize>,
        #[arg(long)]
        videos_per_subject: Option<usize>,
        #[arg(long)]
        frames: Option<u32>,
        /// Frame side in pixels, 32 or 96.
        #[arg(long)]
        resolution: Option<u32>,
        #[arg(long)]
        annotators: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_REQUIRED_ANNOTATORS)]
        required_annotators: usize,
    },
    /// Rebuild consolidated labels from the per-annotator files.
    Consolidate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_REQUIRED_ANNOTATORS)]
        required_annotators: usize,
    },
    /// Write a subject-independent train/val/test split.
    Split {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        train: f64,
        #[arg(long, default_value_t = 0.15)]
        val: f64,
        #[arg(long, default_value_t = 0.15)]
        test: f64,
    },
    /// Run an experiment grid given by --config.
    Run {
        /// Keep a checkpoint per grid point and seed under <out>/checkpoints.
        #[arg(long)]
        checkpoints: bool,
    },
    /// Evaluate a checkpoint on a split.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Write generated images from a GAN checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(short, long, default_value_t = 64)]
        n: usize,
    },
    /// Serve the annotation backend.
    ServeAnnotation {
        #[arg(long, env = "AFFMT_STORE")]
        store: PathBuf,
        #[arg(long, default_value_t = DEFAULT_REQUIRED_ANNOTATORS)]
        required_annotators: usize,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Directory holding the built UI bundle, served at /ui.
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

fn require(path: Option<PathBuf>, what: &str) -> Result<PathBuf, CliError> {
    path.ok_or_else(|| CliError::Validation(format!("--{what} is required for this command")))
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SynthData { subjects, videos_per_subject, frames, resolution, annotators, required_annotators } => {
            let mut cfg = match &cli.config {
                Some(p) => {
                    let text = std::fs::read_to_string(p)
                        .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?;
                    toml::from_str::<SynthConfig>(&text)
                        .map_err(|e| CliError::Validation(format!("{}: {e}", p.display())))?
                }
                None => SynthConfig { seed: cli.seed, ..SynthConfig::default() },
            };
            if let Some(v) = subjects {
                cfg.subjects = v;
            }
            if let Some(v) = videos_per_subject {
                cfg.videos_per_subject = v;
            }
            if let Some(v) = frames {
                cfg.frames_per_video = v;
            }
            if let Some(v) = resolution {
                cfg.resolution = commands::parse_resolution(v)?;
            }
            if let Some(v) = annotators {
                cfg.annotators = v;
            }
            commands::synth_data(&require(cli.out, "out")?, &cfg, required_annotators)
        }
        Command::Consolidate { corpus, required_annotators } => commands::consolidate(&corpus, required_annotators),
        Command::Split { corpus, train, val, test } => commands::split(&corpus, [train, val, test], cli.seed),
        Command::Run { checkpoints } => {
            let spec = require(cli.config, "config")?;
            let out = cli.out.unwrap_or_else(|| PathBuf::from("results"));
            commands::run(&spec, &out, checkpoints).map(|_| ())
        }
        Command::Evaluate { checkpoint, corpus, split } => {
            let split: SplitName = split.parse().map_err(|e| CliError::Validation(format!("{e}")))?;
            commands::evaluate(&checkpoint, &corpus, split, cli.out.as_deref()).map(|_| ())
        }
        Command::Sample { checkpoint, n } => {
            commands::sample(&checkpoint, n, &require(cli.out, "out")?, cli.seed).map(|_| ())
        }
        Command::ServeAnnotation { store, required_annotators, addr, ui } => {
            commands::serve_annotation(&store, required_annotators, addr, ui)
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
