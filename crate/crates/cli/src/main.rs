mod commands;
mod manifest;

use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{AnalyzeArgs, FeaturesArgs, PirArgs, SegmentArgs, SynthCohortArgs, SynthEyesArgs, TrainEvalArgs};

#[derive(Parser)]
#[command(name = "pupilpipe", version, about = "Pupil-iris ratio pipeline: PIR estimation, features, analysis and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort: prediction JSONL, PHQ-9 CSV and ground truth.
    SynthCohort(SynthCohortArgs),
    /// Render a grid of synthetic eye rasters (PGM) with their true boxes.
    SynthEyes(SynthEyesArgs),
    /// Segment PGM rasters into iris/pupil detections (prediction JSONL).
    Segment(SegmentArgs),
    /// Estimate one PIR per session and eye from prediction JSONL.
    Pir(PirArgs),
    /// Build labeled per-day feature vectors from PIR samples and PHQ-9 scores.
    Features(FeaturesArgs),
    /// Correlate every feature with the episode label and select TSF features.
    Analyze(AnalyzeArgs),
    /// Leave-one-participant-out evaluation for the FS, TSF and All feature sets.
    TrainEval(TrainEvalArgs),
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or values; exit code 2.
    Usage(String),
    /// I/O or data failure; exit code 1.
    Failure(String),
    /// Training data holds one class only; exit code 3.
    SingleClass(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Failure(format!("{}: {e}", path.display()))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
            CliError::SingleClass(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Failure(m) | CliError::SingleClass(m) => m,
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("PUPILPIPE_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("PUPILPIPE_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Failure(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::SynthCohort(a) => commands::synth_cohort(a),
        Command::SynthEyes(a) => commands::synth_eyes(a),
        Command::Segment(a) => commands::segment(a),
        Command::Pir(a) => commands::pir(a),
        Command::Features(a) => commands::features(a),
        Command::Analyze(a) => commands::analyze(a),
        Command::TrainEval(a) => commands::train_eval(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
