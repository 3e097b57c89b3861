//! File formats: prediction JSONL, PIR / failure / PHQ-9 / feature CSVs,
//! ground-truth JSONL and report CSVs.

use std::io::{BufRead, Write};

use chrono::{NaiveDate, NaiveDateTime};
use thiserror::Error;

use crate::evaluation::{EvalReport, FeatureSet, PredictionRecord};
use crate::features::{feature_names, Assessment, FeatureVector, LabeledDay, Phq9Record, FEATURE_COUNT};
use crate::model::{validate_frame, EyeSide, FrameRecord, PirSample, SessionKey};
use crate::pir::EstimationFailure;
use crate::scalar::Real;
use crate::stats::FeatureCorrelation;
use crate::synthetic::TruthRecord;

/// Decimal places for CSV reals.
pub const CSV_DECIMALS: usize = 6;
/// Decimal places of rounded report tables.
pub const REPORT_DECIMALS: usize = 2;

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S%.f";

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unexpected header: {0}")]
    Header(String),
}

/// A skipped input line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    /// 1-based.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<R> {
    pub records: Vec<R>,
    pub errors: Vec<LineError>,
}

pub fn format_real<T: Real>(v: T, decimals: usize) -> String {
    let s = format!("{:.*}", decimals, v.as_f64());
    // avoid "-0.000000"
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format(TIMESTAMP_FORMAT).to_string()
}

pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime, chrono::ParseError> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
}

fn parse_err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Parse { line, message: message.into() }
}

fn field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<&str, IoError> {
    rec.get(i).ok_or_else(|| parse_err(line, format!("missing column {}", i + 1)))
}

fn parse_num<T: Real>(s: &str, line: usize) -> Result<T, IoError> {
    let v: f64 = s.trim().parse().map_err(|_| parse_err(line, format!("bad number {s:?}")))?;
    Ok(T::of(v))
}

fn check_header(rec: &csv::StringRecord, expected: &[&str]) -> Result<(), IoError> {
    if rec.iter().eq(expected.iter().copied()) {
        Ok(())
    } else {
        Err(IoError::Header(format!("expected {}, found {}", expected.join(","), rec.iter().collect::<Vec<_>>().join(","))))
    }
}

/// Reads frame records, one JSON object per line. Blank lines are ignored;
/// lines that fail to parse or validate are skipped and reported.
pub fn read_predictions_jsonl<T: Real>(reader: impl BufRead) -> Result<Parsed<FrameRecord<T>>, IoError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<FrameRecord<T>>(&line) {
            Ok(rec) => match validate_frame(&rec) {
                Ok(()) => records.push(rec),
                Err(v) => errors.push(LineError {
                    line: i + 1,
                    message: v.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
                }),
            },
            Err(e) => errors.push(LineError { line: i + 1, message: e.to_string() }),
        }
    }
    Ok(Parsed { records, errors })
}

pub fn write_predictions_jsonl<T: Real>(mut w: impl Write, frames: &[FrameRecord<T>]) -> Result<(), IoError> {
    for f in frames {
        serde_json::to_writer(&mut w, f)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

const PIR_HEADER: [&str; 10] = [
    "participant_id",
    "eye",
    "timestamp",
    "pir",
    "iris_radius_px",
    "pupil_radius_px",
    "eye_center_x",
    "eye_center_y",
    "frames_used",
    "frames_skipped",
];

pub fn write_pir_csv<T: Real>(w: impl Write, samples: &[PirSample<T>]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PIR_HEADER)?;
    for s in samples {
        out.write_record([
            s.participant_id.clone(),
            s.eye.to_string(),
            format_timestamp(&s.timestamp),
            format_real(s.pir, CSV_DECIMALS),
            format_real(s.iris_radius_px, CSV_DECIMALS),
            format_real(s.pupil_radius_px, CSV_DECIMALS),
            format_real(s.eye_center.0, CSV_DECIMALS),
            format_real(s.eye_center.1, CSV_DECIMALS),
            s.frames_used.to_string(),
            s.frames_skipped.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_pir_csv<T: Real>(r: impl std::io::Read) -> Result<Vec<PirSample<T>>, IoError> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    check_header(rd.headers()?, &PIR_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let f = |j| field(&rec, j, line);
        let count = |j| -> Result<usize, IoError> { f(j)?.parse().map_err(|_| parse_err(line, "bad count")) };
        out.push(PirSample {
            participant_id: f(0)?.to_string(),
            eye: f(1)?.parse::<EyeSide>().map_err(|e| parse_err(line, e))?,
            timestamp: parse_timestamp(f(2)?).map_err(|e| parse_err(line, e.to_string()))?,
            pir: parse_num(f(3)?, line)?,
            iris_radius_px: parse_num(f(4)?, line)?,
            pupil_radius_px: parse_num(f(5)?, line)?,
            eye_center: (parse_num(f(6)?, line)?, parse_num(f(7)?, line)?),
            frames_used: count(8)?,
            frames_skipped: count(9)?,
        });
    }
    Ok(out)
}

pub fn write_failures_csv(w: impl Write, failures: &[(SessionKey, EstimationFailure)]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["participant_id", "session_id", "eye", "reason"])?;
    for (k, f) in failures {
        let reason = match f {
            EstimationFailure::NoValidFrames => "no_valid_frames",
        };
        out.write_record([k.participant_id.as_str(), k.session_id.as_str(), k.eye.as_str(), reason])?;
    }
    out.flush()?;
    Ok(())
}

const PHQ9_HEADER: [&str; 4] = ["participant_id", "assessment", "date", "score"];

pub fn write_phq9_csv(w: impl Write, records: &[Phq9Record]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(PHQ9_HEADER)?;
    for r in records {
        out.write_record([r.participant_id.clone(), r.assessment.as_str().to_string(), r.date.to_string(), r.score.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_phq9_csv(r: impl std::io::Read) -> Result<Vec<Phq9Record>, IoError> {
    let mut rd = csv::Reader::from_reader(r);
    check_header(rd.headers()?, &PHQ9_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let f = |j| field(&rec, j, line);
        let score: u8 = f(3)?.trim().parse().map_err(|_| parse_err(line, "bad score"))?;
        if score > 27 {
            return Err(parse_err(line, format!("PHQ-9 total {score} exceeds 27")));
        }
        out.push(Phq9Record {
            participant_id: f(0)?.to_string(),
            assessment: f(1)?.parse::<Assessment>().map_err(|e| parse_err(line, e))?,
            date: f(2)?.parse::<NaiveDate>().map_err(|e| parse_err(line, e.to_string()))?,
            score,
        });
    }
    Ok(out)
}

pub fn write_truth_jsonl(mut w: impl Write, records: &[TruthRecord]) -> Result<(), IoError> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_truth_jsonl(reader: impl BufRead) -> Result<Vec<TruthRecord>, IoError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?);
        }
    }
    Ok(out)
}

fn feature_header() -> Vec<String> {
    let mut h = vec!["participant_id".to_string(), "date".into(), "label".into()];
    h.extend(feature_names().iter().cloned());
    h.extend(feature_names().iter().map(|n| format!("{n}.imputed")));
    h
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn parse_flag(s: &str, line: usize) -> Result<bool, IoError> {
    match s.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(parse_err(line, format!("bad flag {other:?}"))),
    }
}

/// Labeled day matrix: identifiers, label, 48 features, 48 imputation flags.
pub fn write_feature_csv<T: Real>(w: impl Write, days: &[LabeledDay<T>]) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(feature_header())?;
    for d in days {
        let mut rec = vec![d.participant_id.clone(), d.date.to_string(), flag(d.label).to_string()];
        rec.extend(d.features.values.iter().map(|&v| format_real(v, CSV_DECIMALS)));
        rec.extend(d.features.imputed.iter().map(|&b| flag(b).to_string()));
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_feature_csv<T: Real>(r: impl std::io::Read) -> Result<Vec<LabeledDay<T>>, IoError> {
    let mut rd = csv::Reader::from_reader(r);
    let expected = feature_header();
    check_header(rd.headers()?, &expected.iter().map(String::as_str).collect::<Vec<_>>())?;
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let f = |j| field(&rec, j, line);
        let values = (0..FEATURE_COUNT).map(|j| parse_num(f(3 + j)?, line)).collect::<Result<Vec<T>, _>>()?;
        let imputed =
            (0..FEATURE_COUNT).map(|j| parse_flag(f(3 + FEATURE_COUNT + j)?, line)).collect::<Result<Vec<_>, _>>()?;
        out.push(LabeledDay {
            participant_id: f(0)?.to_string(),
            date: f(1)?.parse().map_err(|e: chrono::ParseError| parse_err(line, e.to_string()))?,
            features: FeatureVector { values, imputed },
            label: parse_flag(f(2)?, line)?,
        });
    }
    Ok(out)
}

/// Correlation table with p-value, r and per-class mean and sd.
pub fn write_correlation_csv<T: Real>(w: impl Write, rows: &[FeatureCorrelation<T>], decimals: usize) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "feature",
        "p_value",
        "r_value",
        "depressive_mean",
        "depressive_sd",
        "nondepressive_mean",
        "nondepressive_sd",
    ])?;
    for c in rows {
        let mut rec = vec![c.feature.clone()];
        rec.extend(
            [c.p, c.r, c.depressive_mean, c.depressive_sd, c.nondepressive_mean, c.nondepressive_sd]
                .iter()
                .map(|&v| format_real(v, decimals)),
        );
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

/// One row per feature set: accuracy, precision, recall, F1, AUROC.
/// An undefined AUROC is written as `NA`.
pub fn write_results_csv<T: Real>(w: impl Write, report: &EvalReport<T>, decimals: usize) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["feature_set", "acc", "prec", "rec", "f1", "auroc"])?;
    for row in &report.rows {
        let m = &row.metrics;
        let mut rec = vec![row.feature_set.as_str().to_string()];
        rec.extend([m.accuracy, m.precision, m.recall, m.f1].iter().map(|&v| format_real(v, decimals)));
        rec.push(m.auroc.map_or_else(|| "NA".to_string(), |a| format_real(a, decimals)));
        out.write_record(rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Held-out predictions of every feature set, with the day each row came from.
pub fn write_prediction_log_csv<T: Real>(
    w: impl Write,
    report: &EvalReport<T>,
    days: &[LabeledDay<T>],
) -> Result<(), IoError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["feature_set", "fold", "participant_id", "date", "score", "predicted", "actual"])?;
    for row in &report.rows {
        for p in &row.predictions {
            write_prediction(&mut out, row.feature_set, p, days)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_prediction<T: Real, W: Write>(
    out: &mut csv::Writer<W>,
    set: FeatureSet,
    p: &PredictionRecord<T>,
    days: &[LabeledDay<T>],
) -> Result<(), IoError> {
    let date = days.get(p.row).map_or_else(String::new, |d| d.date.to_string());
    out.write_record([
        set.as_str().to_string(),
        p.fold.to_string(),
        p.participant_id.clone(),
        date,
        format_real(p.score, CSV_DECIMALS),
        flag(p.predicted).to_string(),
        flag(p.actual).to_string(),
    ])?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BoundingBox, Detection, DetectionClass};

    fn ts(s: &str) -> NaiveDateTime {
        parse_timestamp(s).unwrap()
    }

    #[test]
    fn timestamps_with_and_without_millis() {
        let a = ts("2024-03-01T08:00:00");
        assert_eq!(format_timestamp(&a), "2024-03-01T08:00:00");
        let b = ts("2024-03-01T08:00:00.400");
        assert_eq!(format_timestamp(&b), "2024-03-01T08:00:00.400");
        assert_eq!((b - a).num_milliseconds(), 400);
    }

    #[test]
    fn real_formatting() {
        assert_eq!(format_real(1.0f64 / 3.0, 6), "0.333333");
        assert_eq!(format_real(-0.0000001f64, 6), "0.000000");
        assert_eq!(format_real(0.366666f64, 2), "0.37");
    }

    #[test]
    fn jsonl_tolerates_bad_lines() {
        let good = r#"{"participant_id":"P01","session_id":"s1","eye":"left","timestamp":"2024-03-01T08:00:00","eye_open_prob":0.9,"detections":[{"class":"iris","score":0.9,"box":[0,0,20,20]}],"extra":1}"#;
        let bad_box = good.replace("[0,0,20,20]", "[20,0,10,20]");
        let input = format!("{good}\n\nnot json\n{bad_box}\n{good}\n");
        let parsed = read_predictions_jsonl::<f64>(input.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.errors.iter().map(|e| e.line).collect::<Vec<_>>(), vec![3, 4]);
        let mut buf = Vec::new();
        write_predictions_jsonl(&mut buf, &parsed.records).unwrap();
        let again = read_predictions_jsonl::<f64>(buf.as_slice()).unwrap();
        assert_eq!(again.records, parsed.records);
        assert_eq!(
            parsed.records[0].detections[0],
            Detection::new(DetectionClass::Iris, 0.9, BoundingBox::new(0.0, 0.0, 20.0, 20.0))
        );
    }

    #[test]
    fn pir_csv_round_trip() {
        let s = PirSample {
            participant_id: "P01".into(),
            eye: EyeSide::Right,
            timestamp: ts("2024-03-01T08:00:00"),
            pir: 0.366667f64,
            iris_radius_px: 7.5,
            pupil_radius_px: 2.75,
            eye_center: (10.0, 20.5),
            frames_used: 2,
            frames_skipped: 1,
        };
        let mut buf = Vec::new();
        write_pir_csv(&mut buf, std::slice::from_ref(&s)).unwrap();
        assert_eq!(read_pir_csv::<f64>(buf.as_slice()).unwrap(), vec![s]);
        assert!(read_pir_csv::<f64>("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn phq9_round_trip_and_range() {
        let r = Phq9Record {
            participant_id: "P01".into(),
            assessment: Assessment::Midpoint,
            date: NaiveDate::from_ymd_opt(2024, 1, 15).unwrap(),
            score: 7,
        };
        let mut buf = Vec::new();
        write_phq9_csv(&mut buf, std::slice::from_ref(&r)).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "participant_id,assessment,date,score\nP01,midpoint,2024-01-15,7\n");
        assert_eq!(read_phq9_csv(buf.as_slice()).unwrap(), vec![r]);
        assert!(read_phq9_csv("participant_id,assessment,date,score\nP01,baseline,2024-01-01,28\n".as_bytes()).is_err());
    }

    #[test]
    fn feature_csv_round_trip() {
        let day = LabeledDay {
            participant_id: "P02".into(),
            date: NaiveDate::from_ymd_opt(2024, 1, 3).unwrap(),
            features: FeatureVector {
                values: (0..FEATURE_COUNT).map(|i| i as f64 * 0.125).collect(),
                imputed: (0..FEATURE_COUNT).map(|i| i % 4 == 0).collect(),
            },
            label: true,
        };
        let mut buf = Vec::new();
        write_feature_csv(&mut buf, std::slice::from_ref(&day)).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
        assert_eq!(header.len(), 3 + 2 * FEATURE_COUNT);
        assert_eq!(header[3], "pirLeftsum_midnight");
        assert_eq!(header[3 + FEATURE_COUNT], "pirLeftsum_midnight.imputed");
        assert_eq!(read_feature_csv::<f64>(buf.as_slice()).unwrap(), vec![day]);
    }
}
