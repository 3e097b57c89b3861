use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::{Args, ValueEnum};
use serde::Serialize;

use pupilpipe::evaluation::{compare_feature_sets, EvalConfig, EvalError, FeatureSet, SelectionMode};
use pupilpipe::features::{DEFAULT_PIR_MAX, DEFAULT_PIR_MIN};
use pupilpipe::io;
use pupilpipe::learner::{Dataset, ForestParams, LearnerError};
use pupilpipe::model::{group_sessions, EyeSide};
use pupilpipe::pipeline::assemble_days;
use pupilpipe::pir::{estimate_batch, DEFAULT_EYE_OPEN_THRESHOLD};
use pupilpipe::seed::derive_seed;
use pupilpipe::stats::{correlation_table, select_tsf, StatsError, DEFAULT_TSF_P_MAX, DEFAULT_TSF_R_MIN};
use pupilpipe::synthetic::{
    generate_cohort, render_eye_raster, segment_raster, CohortConfig, EffectSizes, EyeRasterSpec, Raster,
    SegmentError, SegmentParams,
};
use pupilpipe::{FrameRecord, LabeledDay};

use crate::manifest::Recorder;
use crate::CliError;

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        eprintln!("WARNING: no --seed given; using seed 0");
        log::warn!("no --seed given; using seed 0");
        0
    })
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), io::IoError>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Failure(e.to_string()))?;
    Ok(buf)
}

fn read_err(path: &Path) -> impl Fn(io::IoError) -> CliError + '_ {
    move |e| CliError::io(path, e)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EffectProfile {
    /// Planted group differences in PIR level and variability.
    Calibrated,
    /// No difference between depressive and non-depressive windows.
    None,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthCohortArgs {
    #[arg(long)]
    pub participants: Option<usize>,
    /// Days per participant (14 or 28).
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Share of two-week windows that are depressive.
    #[arg(long = "depressive-frac")]
    pub depressive_frac: Option<f64>,
    #[arg(long = "effect-profile", value_enum, default_value_t = EffectProfile::Calibrated)]
    pub effect_profile: EffectProfile,
    #[arg(long = "sessions-per-day")]
    pub sessions_per_day: Option<f64>,
    /// JSON cohort configuration; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

pub fn synth_cohort(a: SynthCohortArgs) -> Result<(), CliError> {
    let mut cfg: CohortConfig = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => CohortConfig::default(),
    };
    if let Some(n) = a.participants {
        cfg.n_participants = n;
    }
    if let Some(d) = a.days {
        cfg.days_per_participant = d;
    }
    if let Some(f) = a.depressive_frac {
        cfg.depressive_fraction = f;
    }
    if let Some(s) = a.sessions_per_day {
        cfg.sessions_per_day_mean = s;
    }
    if a.effect_profile == EffectProfile::None {
        cfg.effects = EffectSizes::none();
    }
    if a.seed.is_some() || a.config.is_none() {
        cfg.seed = resolve_seed(a.seed);
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

    let mut rec = Recorder::new("synth-cohort", Some(cfg.seed), &cfg, &a.out)?;
    if let Some(p) = &a.config {
        rec.input(p)?;
    }
    let cohort = generate_cohort::<f64>(&cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    rec.stage("generate");
    rec.write("predictions.jsonl", &csv_bytes(|b| io::write_predictions_jsonl(b, &cohort.frames))?)?;
    rec.write("phq9.csv", &csv_bytes(|b| io::write_phq9_csv(b, &cohort.phq9))?)?;
    rec.write("ground_truth.jsonl", &csv_bytes(|b| io::write_truth_jsonl(b, &cohort.truth.records()))?)?;
    rec.stage("write");
    let depressive = cohort.truth.windows.iter().filter(|w| w.label).count();
    rec.count("frames", cohort.frames.len());
    rec.count("sessions", cohort.truth.sessions.len());
    rec.count("windows", cohort.truth.windows.len());
    rec.count("depressive_windows", depressive);
    println!(
        "participants {}, frames {}, eye sessions {}, windows {} ({} depressive)",
        cfg.n_participants,
        cohort.frames.len(),
        cohort.truth.sessions.len(),
        cohort.truth.windows.len(),
        depressive
    );
    rec.finish()
}

#[derive(Debug, Args, Serialize)]
pub struct SynthEyesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "radius-min", default_value_t = 20)]
    pub radius_min: u32,
    #[arg(long = "radius-max", default_value_t = 40)]
    pub radius_max: u32,
    #[arg(long = "radius-step", default_value_t = 5)]
    pub radius_step: u32,
    /// PIR grid: min, max and step.
    #[arg(long = "pir-min", default_value_t = 0.20)]
    pub pir_min: f64,
    #[arg(long = "pir-max", default_value_t = 0.70)]
    pub pir_max: f64,
    #[arg(long = "pir-step", default_value_t = 0.05)]
    pub pir_step: f64,
    #[arg(long = "noise-sd", default_value_t = 0.0)]
    pub noise_sd: f64,
    #[arg(long = "eyelid", default_value_t = 0.0)]
    pub eyelid: f64,
}

#[derive(Serialize)]
struct RasterTruth<'a> {
    file: String,
    seed: u64,
    spec: &'a EyeRasterSpec,
    iris_box: [f64; 4],
    pupil_box: [f64; 4],
}

pub fn synth_eyes(a: SynthEyesArgs) -> Result<(), CliError> {
    if a.radius_step == 0 || a.radius_min > a.radius_max {
        return Err(CliError::Usage("radius grid needs step ≥ 1 and min ≤ max".into()));
    }
    if !(a.pir_step > 0.0 && a.pir_min <= a.pir_max) {
        return Err(CliError::Usage("PIR grid needs step > 0 and min ≤ max".into()));
    }
    let seed = resolve_seed(a.seed);
    let mut rec = Recorder::new("synth-eyes", Some(seed), &a, &a.out)?;
    let n_pir = ((a.pir_max - a.pir_min) / a.pir_step + 1e-9).floor() as usize + 1;
    let mut truth = Vec::new();
    let mut index = 0u64;
    for r in (a.radius_min..=a.radius_max).step_by(a.radius_step as usize) {
        for k in 0..n_pir {
            let pir = ((a.pir_min + k as f64 * a.pir_step) * 1e6).round() / 1e6;
            let spec = EyeRasterSpec {
                noise_sd: a.noise_sd,
                eyelid_occlusion_frac: a.eyelid,
                ..EyeRasterSpec::centered(r as f64, pir)
            };
            let s = derive_seed(seed, index);
            let img = render_eye_raster(&spec, s).map_err(|e| CliError::Usage(e.to_string()))?;
            let file = format!("rasters/eye_{index:04}.pgm");
            rec.write(&file, &img.to_pgm())?;
            let (ib, pb) = spec.true_boxes::<f64>();
            let line = serde_json::to_string(&RasterTruth {
                file,
                seed: s,
                spec: &spec,
                iris_box: [ib.x1, ib.y1, ib.x2, ib.y2],
                pupil_box: [pb.x1, pb.y1, pb.x2, pb.y2],
            })
            .expect("truth serializes");
            truth.extend_from_slice(line.as_bytes());
            truth.push(b'\n');
            index += 1;
        }
    }
    rec.stage("render");
    rec.write("eyes_truth.jsonl", &truth)?;
    rec.count("rasters", index as usize);
    println!("rasters {index}");
    rec.finish()
}

#[derive(Debug, Args, Serialize)]
pub struct SegmentArgs {
    /// A PGM file or a directory searched recursively for *.pgm.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "pupil-threshold")]
    pub pupil_threshold: Option<u8>,
    #[arg(long = "iris-threshold")]
    pub iris_threshold: Option<u8>,
}

fn collect_pgm(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::io(path, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| CliError::io(path, e)))
        .collect::<Result<_, _>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_pgm(&p, out)?;
        } else if p.extension().is_some_and(|x| x == "pgm") {
            out.push(p);
        }
    }
    Ok(())
}

pub fn segment(a: SegmentArgs) -> Result<(), CliError> {
    if !a.input.exists() {
        return Err(CliError::Failure(format!("{}: no such file or directory", a.input.display())));
    }
    let params = SegmentParams { pupil_threshold: a.pupil_threshold, iris_threshold: a.iris_threshold };
    let mut rec = Recorder::new("segment", None, &a, &a.out)?;
    let mut files = Vec::new();
    collect_pgm(&a.input, &mut files)?;
    let base = if a.input.is_dir() { a.input.clone() } else { a.input.parent().map(Path::to_path_buf).unwrap_or_default() };
    let timestamp = NaiveDate::from_ymd_opt(2000, 1, 1).and_then(|d| d.and_hms_opt(12, 0, 0)).expect("valid time");
    let mut frames = Vec::new();
    let mut failures = csv::Writer::from_writer(Vec::new());
    failures.write_record(["file", "error"]).map_err(|e| CliError::Failure(e.to_string()))?;
    for p in &files {
        let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
        let rel = p.strip_prefix(&base).unwrap_or(p).display().to_string();
        let img = match Raster::from_pgm(&bytes) {
            Ok(i) => i,
            Err(e) => {
                failures.write_record([rel.as_str(), &e.to_string()]).map_err(|e| CliError::Failure(e.to_string()))?;
                continue;
            }
        };
        match segment_raster::<f64>(&img, &params) {
            Ok(detections) => frames.push(FrameRecord {
                participant_id: "synthetic".into(),
                session_id: rel,
                eye: EyeSide::Left,
                timestamp,
                eye_open_prob: 1.0,
                detections,
            }),
            Err(e @ SegmentError::NoComponent(_)) => {
                failures.write_record([rel.as_str(), &e.to_string()]).map_err(|e| CliError::Failure(e.to_string()))?;
            }
            Err(e) => return Err(CliError::Usage(e.to_string())),
        }
    }
    rec.stage("segment");
    let n_fail = files.len() - frames.len();
    rec.write("detections.jsonl", &csv_bytes(|b| io::write_predictions_jsonl(b, &frames))?)?;
    rec.write("segment_failures.csv", &failures.into_inner().map_err(|e| CliError::Failure(e.to_string()))?)?;
    rec.count("rasters", files.len());
    rec.count("segmented", frames.len());
    println!("rasters {}, segmented {}, failed {}", files.len(), frames.len(), n_fail);
    rec.finish()
}

#[derive(Debug, Args, Serialize)]
pub struct PirArgs {
    /// Prediction JSONL.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Frames with eye_open_prob below this are discarded.
    #[arg(long, default_value_t = DEFAULT_EYE_OPEN_THRESHOLD)]
    pub threshold: f64,
}

pub fn pir(a: PirArgs) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(CliError::Usage(format!("--threshold {} outside [0,1]", a.threshold)));
    }
    let parsed = io::read_predictions_jsonl::<f64>(BufReader::new(open(&a.input)?)).map_err(read_err(&a.input))?;
    let mut rec = Recorder::new("pir", None, &a, &a.out)?;
    rec.input(&a.input)?;
    rec.stage("read");
    for e in &parsed.errors {
        log::warn!("{}:{}: {}", a.input.display(), e.line, e.message);
    }
    let grouped = group_sessions(parsed.records);
    let batch = estimate_batch(&grouped.sessions, a.threshold);
    rec.stage("estimate");
    rec.write("pir.csv", &csv_bytes(|b| io::write_pir_csv(b, &batch.samples))?)?;
    rec.write("pir_failures.csv", &csv_bytes(|b| io::write_failures_csv(b, &batch.failures))?)?;
    let mut malformed = csv::Writer::from_writer(Vec::new());
    malformed.write_record(["line", "error"]).map_err(|e| CliError::Failure(e.to_string()))?;
    for e in &parsed.errors {
        malformed.write_record([e.line.to_string(), e.message.clone()]).map_err(|e| CliError::Failure(e.to_string()))?;
    }
    rec.write("malformed_lines.csv", &malformed.into_inner().map_err(|e| CliError::Failure(e.to_string()))?)?;
    rec.count("sessions", grouped.sessions.len());
    rec.count("samples", batch.samples.len());
    rec.count("failures", batch.failures.len());
    rec.count("malformed_lines", parsed.errors.len());
    rec.count("duplicate_frames", grouped.duplicates.len());
    println!(
        "sessions in {}, PIR samples out {}, failures {}, malformed lines {}, duplicate frames {}",
        grouped.sessions.len(),
        batch.samples.len(),
        batch.failures.len(),
        parsed.errors.len(),
        grouped.duplicates.len()
    );
    rec.finish()
}

#[derive(Debug, Args, Serialize)]
pub struct FeaturesArgs {
    /// PIR CSV from the pir command.
    #[arg(long)]
    pub pir: PathBuf,
    /// PHQ-9 schedule CSV.
    #[arg(long)]
    pub phq9: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_PIR_MIN)]
    pub lo: f64,
    #[arg(long, default_value_t = DEFAULT_PIR_MAX)]
    pub hi: f64,
}

pub fn features(a: FeaturesArgs) -> Result<(), CliError> {
    if !(a.lo < a.hi) {
        return Err(CliError::Usage(format!("--lo {} must be below --hi {}", a.lo, a.hi)));
    }
    let samples = io::read_pir_csv::<f64>(open(&a.pir)?).map_err(read_err(&a.pir))?;
    let phq9 = io::read_phq9_csv(open(&a.phq9)?).map_err(read_err(&a.phq9))?;
    let mut rec = Recorder::new("features", None, &a, &a.out)?;
    rec.input(&a.pir)?;
    rec.input(&a.phq9)?;
    rec.stage("read");
    let batch = pupilpipe::pir::BatchResult { samples, failures: Vec::new() };
    let assembly = assemble_days(&batch, &phq9, a.lo, a.hi).map_err(|e| CliError::Failure(e.to_string()))?;
    rec.stage("features");
    rec.write("features.csv", &csv_bytes(|b| io::write_feature_csv(b, &assembly.days))?)?;
    let mut skipped = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::Failure(e.to_string());
    skipped.write_record(["participant_id", "date", "reason"]).map_err(fail)?;
    for (pid, date, reason) in &assembly.dropped {
        skipped.write_record([pid.as_str(), &date.to_string(), &reason.to_string()]).map_err(fail)?;
    }
    for (pid, date) in &assembly.unlabeled {
        skipped.write_record([pid.as_str(), &date.to_string(), "outside every episode window"]).map_err(fail)?;
    }
    rec.write("skipped_days.csv", &skipped.into_inner().map_err(|e| CliError::Failure(e.to_string()))?)?;
    let positives = assembly.days.iter().filter(|d| d.label).count();
    rec.count("samples_in", batch.samples.len());
    rec.count("samples_in_range", assembly.samples_in_range);
    rec.count("days", assembly.days.len());
    rec.count("depressive_days", positives);
    rec.count("dropped_days", assembly.dropped.len());
    rec.count("unlabeled_days", assembly.unlabeled.len());
    println!(
        "samples {} ({} in range), labeled days {} ({} depressive), dropped {}, unlabeled {}",
        batch.samples.len(),
        assembly.samples_in_range,
        assembly.days.len(),
        positives,
        assembly.dropped.len(),
        assembly.unlabeled.len()
    );
    rec.finish()
}

fn read_days(path: &Path) -> Result<Vec<LabeledDay>, CliError> {
    io::read_feature_csv::<f64>(open(path)?).map_err(read_err(path))
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    /// Feature CSV from the features command.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "p-max", default_value_t = DEFAULT_TSF_P_MAX)]
    pub p_max: f64,
    #[arg(long = "r-min", default_value_t = DEFAULT_TSF_R_MIN)]
    pub r_min: f64,
    /// Round report values to two decimals.
    #[arg(long = "paper-format")]
    pub paper_format: bool,
}

fn decimals(paper_format: bool) -> usize {
    if paper_format {
        io::REPORT_DECIMALS
    } else {
        io::CSV_DECIMALS
    }
}

pub fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    let days = read_days(&a.features)?;
    let mut rec = Recorder::new("analyze", None, &a, &a.out)?;
    rec.input(&a.features)?;
    rec.stage("read");
    let table = correlation_table(&days).map_err(|e| match e {
        StatsError::SingleClass => CliError::SingleClass(e.to_string()),
        other => CliError::Failure(other.to_string()),
    })?;
    let tsf = match select_tsf(&table, a.p_max, a.r_min) {
        Ok(t) => t,
        Err(StatsError::EmptySelection) => {
            eprintln!("no feature passes p < {} and |r| ≥ {}", a.p_max, a.r_min);
            Vec::new()
        }
        Err(e) => return Err(CliError::Failure(e.to_string())),
    };
    rec.stage("correlate");
    rec.write("correlations.csv", &csv_bytes(|b| io::write_correlation_csv(b, &table, decimals(a.paper_format)))?)?;
    let mut list = tsf.join("\n");
    if !list.is_empty() {
        list.push('\n');
    }
    rec.write("tsf_features.txt", list.as_bytes())?;
    rec.count("days", days.len());
    rec.count("tsf_features", tsf.len());
    println!("days {}, TSF features {}: {}", days.len(), tsf.len(), tsf.join(", "));
    rec.finish()
}

#[derive(Debug, Args, Serialize)]
pub struct TrainEvalArgs {
    /// Feature CSV from the features command.
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated subset of fs, tsf, all.
    #[arg(long = "feature-sets", default_value = "fs,tsf,all")]
    pub feature_sets: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Select features once on all data instead of inside each fold.
    #[arg(long = "paper-faithful")]
    pub paper_faithful: bool,
    /// Round report values to two decimals.
    #[arg(long = "paper-format")]
    pub paper_format: bool,
    /// Trees in the forest behind FS importances.
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
}

pub fn train_eval(a: TrainEvalArgs) -> Result<(), CliError> {
    let sets: Vec<FeatureSet> = a
        .feature_sets
        .split(',')
        .map(|s| s.trim().parse::<FeatureSet>().map_err(CliError::Usage))
        .collect::<Result<_, _>>()?;
    let mut unique = sets.clone();
    unique.sort();
    unique.dedup();
    if unique.len() != sets.len() {
        return Err(CliError::Usage("--feature-sets lists a set twice".into()));
    }
    if a.trees == 0 {
        return Err(CliError::Usage("--trees must be ≥ 1".into()));
    }
    let seed = resolve_seed(a.seed);
    let days = read_days(&a.features)?;
    let cfg = EvalConfig {
        forest: ForestParams { n_trees: a.trees, ..ForestParams::default() },
        selection: if a.paper_faithful { SelectionMode::Global } else { SelectionMode::PerFold },
        ..EvalConfig::default()
    };
    #[derive(Serialize)]
    struct Config<'a> {
        args: &'a TrainEvalArgs,
        eval: &'a EvalConfig,
    }
    let mut rec = Recorder::new("train-eval", Some(seed), &Config { args: &a, eval: &cfg }, &a.out)?;
    rec.input(&a.features)?;
    rec.stage("read");
    let data = Dataset::from_labeled_days(&days);
    let report = compare_feature_sets(&data, &sets, &cfg, seed).map_err(|e| match e {
        EvalError::SingleClass | EvalError::Learner(LearnerError::SingleClass) => CliError::SingleClass(e.to_string()),
        EvalError::Stats(StatsError::SingleClass) => CliError::SingleClass(e.to_string()),
        other => CliError::Failure(other.to_string()),
    })?;
    rec.stage("evaluate");
    rec.write("results.csv", &csv_bytes(|b| io::write_results_csv(b, &report, decimals(a.paper_format)))?)?;
    rec.write("predictions.csv", &csv_bytes(|b| io::write_prediction_log_csv(b, &report, &days))?)?;
    let folds: Vec<_> = report.rows.iter().map(|r| (r.feature_set, &r.folds)).collect();
    rec.write("folds.json", (serde_json::to_string_pretty(&folds).expect("folds serialize") + "\n").as_bytes())?;
    rec.count("days", days.len());
    for row in &report.rows {
        let m = &row.metrics;
        println!(
            "{:<4} acc {:.2} prec {:.2} rec {:.2} f1 {:.2} auroc {}",
            row.feature_set.as_str(),
            m.accuracy,
            m.precision,
            m.recall,
            m.f1,
            m.auroc.map_or("NA".to_string(), |v| format!("{v:.2}"))
        );
    }
    rec.finish()
}
