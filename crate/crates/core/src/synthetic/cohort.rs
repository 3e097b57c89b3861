//! Synthetic cohorts: burst sessions, PHQ-9 schedules and ground truth.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{Assessment, Epoch, Phq9Record, WINDOW_DAYS};
use crate::model::{BoundingBox, Detection, DetectionClass, EyeSide, FrameRecord};
use crate::scalar::Real;
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid cohort config: {0}")]
pub struct InvalidConfig(pub String);

/// Normal distribution restricted to `[lo, hi]` by rejection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedNormal {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

impl TruncatedNormal {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.sd == 0.0 {
            return self.mean.clamp(self.lo, self.hi);
        }
        let n = Normal::new(self.mean, self.sd).expect("validated sd");
        for _ in 0..10_000 {
            let v = n.sample(rng);
            if (self.lo..=self.hi).contains(&v) {
                return v;
            }
        }
        self.mean.clamp(self.lo, self.hi)
    }
}

/// Changes applied to sessions inside depressive windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectSizes {
    pub morning_right_sd_mult: f64,
    pub morning_left_mean_shift: f64,
    pub evening_count_mult: f64,
}

impl EffectSizes {
    pub fn none() -> Self {
        Self { morning_right_sd_mult: 1.0, morning_left_mean_shift: 0.0, evening_count_mult: 1.0 }
    }
}

impl Default for EffectSizes {
    fn default() -> Self {
        Self { morning_right_sd_mult: 2.0, morning_left_mean_shift: -0.02, evening_count_mult: 1.6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub n_participants: usize,
    /// 14 or 28.
    pub days_per_participant: usize,
    pub sessions_per_day_mean: f64,
    pub start_date: NaiveDate,
    /// Per-participant, per-eye PIR mean.
    pub pir_mean: TruncatedNormal,
    /// Per-participant, per-eye session-to-session PIR sd.
    pub pir_sd: TruncatedNormal,
    pub depressive_fraction: f64,
    pub effects: EffectSizes,
    /// Relative session rates for midnight, morning, afternoon, evening.
    pub epoch_weights: [f64; 4],
    /// Chance that an epoch of a day gets no sessions at all.
    pub missing_epoch_prob: f64,
    /// Shape of a mean-one Gamma multiplier on each day's session rates,
    /// making daily counts negative binomial. `None` keeps them Poisson.
    pub day_activity_shape: Option<f64>,
    pub frames_per_session: usize,
    pub frame_interval_ms: i64,
    /// Share of frames drawn with eye_open_prob below 0.75.
    pub closed_frame_frac: f64,
    pub pupil_dropout_prob: f64,
    pub spurious_iris_prob: f64,
    /// Iris box width range in pixels, drawn once per participant.
    pub iris_width_px: (f64, f64),
    pub box_jitter_sd: f64,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        Self {
            n_participants: 25,
            days_per_participant: 28,
            sessions_per_day_mean: 11.85,
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            pir_mean: TruncatedNormal { mean: 0.33, sd: 0.015, lo: 0.29, hi: 0.41 },
            pir_sd: TruncatedNormal { mean: 0.032, sd: 0.008, lo: 0.02, hi: 0.07 },
            depressive_fraction: 14.0 / 44.0,
            effects: EffectSizes::default(),
            epoch_weights: [0.04, 0.38, 0.16, 0.42],
            missing_epoch_prob: 0.05,
            day_activity_shape: Some(6.0),
            frames_per_session: 25,
            frame_interval_ms: 400,
            closed_frame_frac: 0.10,
            pupil_dropout_prob: 0.02,
            spurious_iris_prob: 0.05,
            iris_width_px: (40.0, 80.0),
            box_jitter_sd: 0.5,
            seed: 0,
        }
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<(), InvalidConfig> {
        let bad = |m: String| Err(InvalidConfig(m));
        if self.n_participants == 0 {
            return bad("n_participants must be ≥ 1".into());
        }
        if self.days_per_participant != 14 && self.days_per_participant != 28 {
            return bad(format!("days_per_participant {} must be 14 or 28", self.days_per_participant));
        }
        if !(self.sessions_per_day_mean >= 0.0 && self.sessions_per_day_mean.is_finite()) {
            return bad("sessions_per_day_mean must be ≥ 0".into());
        }
        for (name, p) in [
            ("depressive_fraction", self.depressive_fraction),
            ("closed_frame_frac", self.closed_frame_frac),
            ("pupil_dropout_prob", self.pupil_dropout_prob),
            ("spurious_iris_prob", self.spurious_iris_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0,1]"));
            }
        }
        if !(0.0..1.0).contains(&self.missing_epoch_prob) {
            return bad(format!("missing_epoch_prob {} outside [0,1)", self.missing_epoch_prob));
        }
        if self.day_activity_shape.is_some_and(|k| !(k > 0.0 && k.is_finite())) {
            return bad("day_activity_shape must be positive".into());
        }
        if self.epoch_weights.iter().any(|w| !(*w >= 0.0)) || self.epoch_weights.iter().sum::<f64>() <= 0.0 {
            return bad("epoch weights must be ≥ 0 with a positive sum".into());
        }
        for (name, t) in [("pir_mean", self.pir_mean), ("pir_sd", self.pir_sd)] {
            if !(t.sd >= 0.0 && t.lo <= t.hi && t.lo >= 0.0) {
                return bad(format!("{name} needs sd ≥ 0 and 0 ≤ lo ≤ hi"));
            }
        }
        let e = self.effects;
        if !(e.morning_right_sd_mult >= 0.0 && e.evening_count_mult >= 0.0 && e.morning_left_mean_shift.is_finite()) {
            return bad("effect multipliers must be ≥ 0".into());
        }
        if self.frames_per_session == 0 || self.frame_interval_ms < 0 {
            return bad("frames_per_session ≥ 1 and frame_interval_ms ≥ 0 required".into());
        }
        let (w0, w1) = self.iris_width_px;
        if !(w0 >= 10.0 && w0 <= w1) {
            return bad("iris_width_px must satisfy 10 ≤ lo ≤ hi".into());
        }
        if !(self.box_jitter_sd >= 0.0) {
            return bad("box_jitter_sd must be ≥ 0".into());
        }
        Ok(())
    }

    pub fn windows_per_participant(&self) -> usize {
        self.days_per_participant / WINDOW_DAYS as usize
    }

    /// Expected sessions per epoch for a non-depressive day, scaled so the
    /// cohort-wide mean sessions per day equals `sessions_per_day_mean`
    /// given the missing-epoch rate and the evening effect.
    pub fn epoch_rates(&self) -> [f64; 4] {
        let total: f64 = self.epoch_weights.iter().sum();
        let share = self.epoch_weights.map(|w| w / total);
        let dep_boost = self.depressive_fraction * (self.effects.evening_count_mult - 1.0) * share[3];
        let base = self.sessions_per_day_mean / ((1.0 - self.missing_epoch_prob) * (1.0 + dep_boost));
        share.map(|s| s * base)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantTruth {
    pub participant_id: String,
    pub iris_width_px: f64,
    pub pir_mean: [f64; 2],
    pub pir_sd: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionTruth {
    pub participant_id: String,
    pub session_id: String,
    pub eye: EyeSide,
    pub start: NaiveDateTime,
    pub epoch: Epoch,
    pub true_pir: f64,
    /// Frames that should survive the eye-open filter and class check.
    pub frames_used: usize,
    pub depressive: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowTruth {
    pub participant_id: String,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
    pub phq9_start: u8,
    pub phq9_end: u8,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub config: CohortConfig,
    pub participants: Vec<ParticipantTruth>,
    pub sessions: Vec<SessionTruth>,
    pub windows: Vec<WindowTruth>,
}

/// One line of the ground-truth sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthRecord {
    Config(CohortConfig),
    Participant(ParticipantTruth),
    Session(SessionTruth),
    Window(WindowTruth),
}

impl GroundTruth {
    pub fn records(&self) -> Vec<TruthRecord> {
        std::iter::once(TruthRecord::Config(self.config.clone()))
            .chain(self.participants.iter().cloned().map(TruthRecord::Participant))
            .chain(self.sessions.iter().cloned().map(TruthRecord::Session))
            .chain(self.windows.iter().cloned().map(TruthRecord::Window))
            .collect()
    }

    pub fn from_records(records: impl IntoIterator<Item = TruthRecord>) -> Result<Self, InvalidConfig> {
        let mut config = None;
        let (mut participants, mut sessions, mut windows) = (Vec::new(), Vec::new(), Vec::new());
        for r in records {
            match r {
                TruthRecord::Config(c) => config = Some(c),
                TruthRecord::Participant(p) => participants.push(p),
                TruthRecord::Session(s) => sessions.push(s),
                TruthRecord::Window(w) => windows.push(w),
            }
        }
        let config = config.ok_or_else(|| InvalidConfig("ground truth lacks a config record".into()))?;
        Ok(Self { config, participants, sessions, windows })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort<T: Real> {
    pub frames: Vec<FrameRecord<T>>,
    pub phq9: Vec<Phq9Record>,
    pub truth: GroundTruth,
}

pub fn participant_id(index: usize) -> String {
    format!("P{:02}", index + 1)
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

/// PHQ-9 totals for consecutive assessments consistent with window labels:
/// a window is depressive iff both of its endpoints score ≥ 5.
fn phq9_scores(labels: &[bool], rng: &mut ChaCha8Rng) -> Vec<u8> {
    let n = labels.len() + 1;
    // an assessment must be high when any adjacent window is depressive
    let mut high: Vec<Option<bool>> = vec![None; n];
    for (w, &l) in labels.iter().enumerate() {
        if l {
            high[w] = Some(true);
            high[w + 1] = Some(true);
        }
    }
    for (w, &l) in labels.iter().enumerate() {
        if !l && high[w] != Some(false) && high[w + 1] != Some(false) {
            // pick which endpoint goes low; prefer a free one
            let low = match (high[w], high[w + 1]) {
                (Some(true), _) => w + 1,
                (_, Some(true)) => w,
                _ => {
                    if rng.random::<bool>() {
                        w
                    } else {
                        w + 1
                    }
                }
            };
            high[low] = Some(false);
        }
    }
    high.into_iter()
        .map(|h| match h {
            Some(true) => rng.random_range(5..=20),
            Some(false) => rng.random_range(0..=4),
            None => rng.random_range(0..=14),
        })
        .collect()
}

struct ParticipantOutput<T: Real> {
    frames: Vec<FrameRecord<T>>,
    truth: ParticipantTruth,
    sessions: Vec<SessionTruth>,
}

fn epoch_start_hour(e: Epoch) -> u32 {
    e as u32 * 6
}

fn generate_participant<T: Real>(cfg: &CohortConfig, index: usize, labels: &[bool]) -> ParticipantOutput<T> {
    let pid = participant_id(index);
    let mut rng = rng_from(derive_seed(cfg.seed, index as u64));
    let (w0, w1) = cfg.iris_width_px;
    let iris_w = if w1 > w0 { rng.random_range(w0..=w1) } else { w0 };
    let means = [cfg.pir_mean.sample(&mut rng), cfg.pir_mean.sample(&mut rng)];
    let sds = [cfg.pir_sd.sample(&mut rng), cfg.pir_sd.sample(&mut rng)];
    let centers: [(f64, f64); 2] =
        [(rng.random_range(120.0..180.0), rng.random_range(90.0..110.0)), (rng.random_range(320.0..380.0), rng.random_range(90.0..110.0))];
    let rates = cfg.epoch_rates();
    let jitter = Normal::new(0.0, cfg.box_jitter_sd).expect("validated");
    let burst_ms = cfg.frame_interval_ms * (cfg.frames_per_session as i64 - 1);
    let latest_offset_s = (6 * 3600 - burst_ms / 1000 - 1).max(0);

    let mut frames = Vec::new();
    let mut sessions = Vec::new();
    for day in 0..cfg.days_per_participant {
        let date = cfg.start_date + Duration::days(day as i64);
        let depressive = labels[day / WINDOW_DAYS as usize];
        let activity = match cfg.day_activity_shape {
            Some(k) => Gamma::new(k, 1.0 / k).expect("validated shape").sample(&mut rng),
            None => 1.0,
        };
        let mut starts = Vec::new();
        for epoch in Epoch::ALL {
            if rng.random::<f64>() < cfg.missing_epoch_prob {
                continue;
            }
            let mut lambda = rates[epoch as usize] * activity;
            if depressive && epoch == Epoch::Evening {
                lambda *= cfg.effects.evening_count_mult;
            }
            let count = if lambda > 0.0 { Poisson::new(lambda).expect("positive rate").sample(&mut rng) as usize } else { 0 };
            for _ in 0..count {
                let offset = rng.random_range(0..=latest_offset_s);
                let start = date.and_hms_opt(epoch_start_hour(epoch), 0, 0).expect("valid hour") + Duration::seconds(offset);
                starts.push((start, epoch));
            }
        }
        starts.sort();
        for (k, (start, epoch)) in starts.into_iter().enumerate() {
            let session_id = format!("{pid}-D{:02}-S{:02}", day + 1, k + 1);
            for (e, eye) in EyeSide::ALL.into_iter().enumerate() {
                let mut mean = means[e];
                let mut sd = sds[e];
                if depressive && epoch == Epoch::Morning {
                    match eye {
                        EyeSide::Left => mean += cfg.effects.morning_left_mean_shift,
                        EyeSide::Right => sd *= cfg.effects.morning_right_sd_mult,
                    }
                }
                let pir = if sd > 0.0 { Normal::new(mean, sd).expect("sd > 0").sample(&mut rng) } else { mean };
                let pir = pir.clamp(0.05, 0.95);
                let (cx, cy) = centers[e];
                let mut used = 0;
                for f in 0..cfg.frames_per_session {
                    let timestamp = start + Duration::milliseconds(cfg.frame_interval_ms * f as i64);
                    let open = if rng.random::<f64>() < cfg.closed_frame_frac {
                        rng.random_range(0.05..0.74)
                    } else {
                        rng.random_range(0.76..=1.0)
                    };
                    let wi = (iris_w + jitter.sample(&mut rng)).max(2.0);
                    let wp = (pir * iris_w + jitter.sample(&mut rng)).clamp(1.5, wi - 0.5);
                    let bx = |w: f64, h: f64, dx: f64| {
                        BoundingBox::new(
                            T::of(round_to(cx + dx - w / 2.0, 3)),
                            T::of(round_to(cy - h / 2.0, 3)),
                            T::of(round_to(cx + dx + w / 2.0, 3)),
                            T::of(round_to(cy + h / 2.0, 3)),
                        )
                    };
                    let iris_score = rng.random_range(0.85..0.99);
                    let mut detections = Vec::with_capacity(3);
                    if rng.random::<f64>() < cfg.spurious_iris_prob {
                        let s = iris_score * rng.random_range(0.3..0.9);
                        detections.push(Detection::new(DetectionClass::Iris, T::of(round_to(s, 4)), bx(wi * 0.7, wi * 0.6, wi * 0.4)));
                    }
                    detections.push(Detection::new(DetectionClass::Iris, T::of(round_to(iris_score, 4)), bx(wi, wi * 0.9, 0.0)));
                    let has_pupil = rng.random::<f64>() >= cfg.pupil_dropout_prob;
                    if has_pupil {
                        let s = rng.random_range(0.75..0.99);
                        detections.push(Detection::new(DetectionClass::Pupil, T::of(round_to(s, 4)), bx(wp, wp, 0.0)));
                    }
                    let open = round_to(open, 4);
                    if open >= 0.75 && has_pupil {
                        used += 1;
                    }
                    frames.push(FrameRecord {
                        participant_id: pid.clone(),
                        session_id: session_id.clone(),
                        eye,
                        timestamp,
                        eye_open_prob: T::of(open),
                        detections,
                    });
                }
                sessions.push(SessionTruth {
                    participant_id: pid.clone(),
                    session_id: session_id.clone(),
                    eye,
                    start,
                    epoch,
                    true_pir: pir,
                    frames_used: used,
                    depressive,
                });
            }
        }
    }
    ParticipantOutput {
        frames,
        truth: ParticipantTruth { participant_id: pid, iris_width_px: iris_w, pir_mean: means, pir_sd: sds },
        sessions,
    }
}

/// Draws window labels, then every participant independently from a seed
/// derived from `(config.seed, participant index)`.
pub fn generate_cohort<T: Real>(config: &CohortConfig) -> Result<Cohort<T>, InvalidConfig> {
    config.validate()?;
    let per = config.windows_per_participant();
    let total = config.n_participants * per;
    let n_dep = (config.depressive_fraction * total as f64).round() as usize;
    let mut label_rng = rng_from(derive_seed(config.seed, u64::MAX));
    let mut labels = vec![false; total];
    for i in sample(&mut label_rng, total, n_dep.min(total)) {
        labels[i] = true;
    }
    let outputs: Vec<ParticipantOutput<T>> = (0..config.n_participants)
        .into_par_iter()
        .map(|i| generate_participant(config, i, &labels[i * per..(i + 1) * per]))
        .collect();

    let mut phq9 = Vec::new();
    let mut windows = Vec::new();
    for i in 0..config.n_participants {
        let pid = participant_id(i);
        let l = &labels[i * per..(i + 1) * per];
        let scores = phq9_scores(l, &mut label_rng);
        let kinds = [Assessment::Baseline, Assessment::Midpoint, Assessment::Endpoint];
        for (k, &score) in scores.iter().enumerate() {
            let date = config.start_date + Duration::days(WINDOW_DAYS * k as i64);
            phq9.push(Phq9Record { participant_id: pid.clone(), assessment: kinds[k], date, score });
        }
        for (w, &label) in l.iter().enumerate() {
            let start_date = config.start_date + Duration::days(WINDOW_DAYS * w as i64);
            windows.push(WindowTruth {
                participant_id: pid.clone(),
                start_date,
                end_date: start_date + Duration::days(WINDOW_DAYS - 1),
                phq9_start: scores[w],
                phq9_end: scores[w + 1],
                label,
            });
        }
    }
    let mut frames = Vec::new();
    let mut participants = Vec::new();
    let mut sessions = Vec::new();
    for o in outputs {
        frames.extend(o.frames);
        participants.push(o.truth);
        sessions.extend(o.sessions);
    }
    Ok(Cohort { frames, phq9, truth: GroundTruth { config: config.clone(), participants, sessions, windows } })
}

/// Window labels straight from the ground truth.
pub fn emit_gold_episode_labels(truth: &GroundTruth) -> Vec<(String, NaiveDate, bool)> {
    truth.windows.iter().map(|w| (w.participant_id.clone(), w.start_date, w.label)).collect()
}
