//! Per-day epoch features and PHQ-9 episode labels.
//!
//! A participant-day is split into four six-hour epochs. For each eye and
//! epoch six statistics are computed over the day's PIR samples, giving
//! 2 × 6 × 4 = 48 features. Empty epochs are imputed from the same
//! (eye, statistic) averaged over the day's populated epochs.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::OnceLock;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EyeSide, PirSample};
use crate::scalar::Real;

pub const DEFAULT_PIR_MIN: f64 = 0.2;
pub const DEFAULT_PIR_MAX: f64 = 0.7;
pub const FEATURE_COUNT: usize = 48;
/// Days per episode window.
pub const WINDOW_DAYS: i64 = 14;
/// PHQ-9 total at or above which a score counts as symptomatic.
pub const PHQ9_CUTOFF: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Epoch {
    Midnight,
    Morning,
    Afternoon,
    Evening,
}

impl Epoch {
    pub const ALL: [Epoch; 4] = [Epoch::Midnight, Epoch::Morning, Epoch::Afternoon, Epoch::Evening];

    pub fn as_str(self) -> &'static str {
        match self {
            Epoch::Midnight => "midnight",
            Epoch::Morning => "morning",
            Epoch::Afternoon => "afternoon",
            Epoch::Evening => "evening",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Epoch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// [00,06) midnight, [06,12) morning, [12,18) afternoon, [18,24) evening.
pub fn assign_epoch(timestamp: &NaiveDateTime) -> Epoch {
    Epoch::ALL[(timestamp.hour() / 6) as usize]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stat {
    Sum,
    Min,
    Max,
    Mean,
    Median,
    Std,
}

impl Stat {
    pub const ALL: [Stat; 6] = [Stat::Sum, Stat::Min, Stat::Max, Stat::Mean, Stat::Median, Stat::Std];

    pub fn as_str(self) -> &'static str {
        match self {
            Stat::Sum => "sum",
            Stat::Min => "min",
            Stat::Max => "max",
            Stat::Mean => "mean",
            Stat::Median => "median",
            Stat::Std => "std",
        }
    }
}

/// Keeps samples with `lo ≤ pir ≤ hi`, preserving order.
pub fn filter_pir_range<T: Real>(samples: &[PirSample<T>], lo: T, hi: T) -> Vec<PirSample<T>> {
    samples.iter().filter(|s| s.pir >= lo && s.pir <= hi).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats<T: Real> {
    pub sum: T,
    pub min: T,
    pub max: T,
    pub mean: T,
    pub median: T,
    /// Population standard deviation.
    pub std: T,
}

impl<T: Real> EpochStats<T> {
    pub fn get(&self, stat: Stat) -> T {
        match stat {
            Stat::Sum => self.sum,
            Stat::Min => self.min,
            Stat::Max => self.max,
            Stat::Mean => self.mean,
            Stat::Median => self.median,
            Stat::Std => self.std,
        }
    }
}

/// The six summary statistics; `None` for an empty epoch.
pub fn epoch_stats<T: Real>(pirs: &[T]) -> Option<EpochStats<T>> {
    if pirs.is_empty() {
        return None;
    }
    let mut sorted = pirs.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite PIR"));
    let n = sorted.len();
    let sum: T = sorted.iter().copied().sum();
    let mean = sum / T::of_usize(n);
    let var = sorted.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>() / T::of_usize(n);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / T::of(2.0)
    };
    Some(EpochStats { sum, min: sorted[0], max: sorted[n - 1], mean, median, std: var.sqrt() })
}

/// Canonical position of a feature: sides, then stats, then epochs.
pub fn feature_index(side: EyeSide, stat: Stat, epoch: Epoch) -> usize {
    let s = match side {
        EyeSide::Left => 0,
        EyeSide::Right => 1,
    };
    s * 24 + (stat as usize) * 4 + epoch.index()
}

pub fn feature_name(side: EyeSide, stat: Stat, epoch: Epoch) -> String {
    let side = match side {
        EyeSide::Left => "Left",
        EyeSide::Right => "Right",
    };
    format!("pir{side}{}_{}", stat.as_str(), epoch.as_str())
}

/// All 48 feature names in canonical order.
pub fn feature_names() -> &'static [String] {
    static NAMES: OnceLock<Vec<String>> = OnceLock::new();
    NAMES.get_or_init(|| {
        let mut names = Vec::with_capacity(FEATURE_COUNT);
        for side in EyeSide::ALL {
            for stat in Stat::ALL {
                for epoch in Epoch::ALL {
                    names.push(feature_name(side, stat, epoch));
                }
            }
        }
        names
    })
}

/// 48 feature values plus a flag per cell telling whether it was imputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeatureVector<T: Real> {
    pub values: Vec<T>,
    pub imputed: Vec<bool>,
}

impl<T: Real> FeatureVector<T> {
    pub fn get(&self, side: EyeSide, stat: Stat, epoch: Epoch) -> T {
        self.values[feature_index(side, stat, epoch)]
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, T)> {
        feature_names().iter().map(String::as_str).zip(self.values.iter().copied())
    }
}

/// Why a participant-day produced no feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum DroppedDay {
    #[error("no PIR samples on this day")]
    NoSamples,
}

fn cell_mean<T: Real>(cells: &[Option<T>], side: EyeSide, stat: Stat) -> Option<T> {
    let present: Vec<T> =
        Epoch::ALL.iter().filter_map(|&e| cells[feature_index(side, stat, e)]).collect();
    crate::scalar::mean(&present)
}

/// Fills missing cells with the mean of the same (eye, stat) over the
/// day's present epochs. If an eye has no present epoch at all, the other
/// eye's mean for that stat is used; if neither has one the day is dropped.
pub fn impute_cells<T: Real>(cells: &[Option<T>]) -> Result<FeatureVector<T>, DroppedDay> {
    assert_eq!(cells.len(), FEATURE_COUNT, "feature cell count");
    let mut values = vec![T::zero(); FEATURE_COUNT];
    let mut imputed = vec![false; FEATURE_COUNT];
    for stat in Stat::ALL {
        let left = cell_mean(cells, EyeSide::Left, stat);
        let right = cell_mean(cells, EyeSide::Right, stat);
        for side in EyeSide::ALL {
            let (own, other) = match side {
                EyeSide::Left => (left, right),
                EyeSide::Right => (right, left),
            };
            let fill = own.or(other).ok_or(DroppedDay::NoSamples)?;
            for epoch in Epoch::ALL {
                let i = feature_index(side, stat, epoch);
                match cells[i] {
                    Some(v) => values[i] = v,
                    None => {
                        values[i] = fill;
                        imputed[i] = true;
                    }
                }
            }
        }
    }
    Ok(FeatureVector { values, imputed })
}

/// Builds the feature vector of one participant-day from range-filtered samples.
pub fn build_day_vector<T: Real>(samples: &[PirSample<T>]) -> Result<FeatureVector<T>, DroppedDay> {
    let mut buckets: [[Vec<T>; 4]; 2] = Default::default();
    for s in samples {
        let side = match s.eye {
            EyeSide::Left => 0,
            EyeSide::Right => 1,
        };
        buckets[side][assign_epoch(&s.timestamp).index()].push(s.pir);
    }
    let mut cells = vec![None; FEATURE_COUNT];
    for side in EyeSide::ALL {
        let b = &buckets[if side == EyeSide::Left { 0 } else { 1 }];
        for epoch in Epoch::ALL {
            if let Some(st) = epoch_stats(&b[epoch.index()]) {
                for stat in Stat::ALL {
                    cells[feature_index(side, stat, epoch)] = Some(st.get(stat));
                }
            }
        }
    }
    impute_cells(&cells)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DayVector<T: Real> {
    pub participant_id: String,
    pub date: NaiveDate,
    pub features: FeatureVector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DayBuild<T: Real> {
    pub days: Vec<DayVector<T>>,
    pub dropped: Vec<(String, NaiveDate, DroppedDay)>,
}

/// Groups samples by (participant, calendar date) and builds each day's vector.
/// Output is ordered by participant then date.
pub fn build_day_vectors<T: Real>(samples: &[PirSample<T>]) -> DayBuild<T> {
    let mut groups: BTreeMap<(&str, NaiveDate), Vec<PirSample<T>>> = BTreeMap::new();
    for s in samples {
        groups.entry((s.participant_id.as_str(), s.timestamp.date())).or_default().push(s.clone());
    }
    let mut days = Vec::with_capacity(groups.len());
    let mut dropped = Vec::new();
    for ((pid, date), group) in groups {
        match build_day_vector(&group) {
            Ok(features) => days.push(DayVector { participant_id: pid.to_string(), date, features }),
            Err(e) => dropped.push((pid.to_string(), date, e)),
        }
    }
    DayBuild { days, dropped }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Assessment {
    Baseline,
    Midpoint,
    Endpoint,
}

impl Assessment {
    pub fn as_str(self) -> &'static str {
        match self {
            Assessment::Baseline => "baseline",
            Assessment::Midpoint => "midpoint",
            Assessment::Endpoint => "endpoint",
        }
    }
}

impl std::str::FromStr for Assessment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(Assessment::Baseline),
            "midpoint" => Ok(Assessment::Midpoint),
            "endpoint" => Ok(Assessment::Endpoint),
            other => Err(format!("unknown assessment {other:?}")),
        }
    }
}

/// One PHQ-9 administration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phq9Record {
    pub participant_id: String,
    pub assessment: Assessment,
    pub date: NaiveDate,
    pub score: u8,
}

/// Depressive iff the PHQ-9 total is at least 5 at both ends of the window.
pub fn episode_label(phq9_start: u8, phq9_end: u8) -> bool {
    phq9_start >= PHQ9_CUTOFF && phq9_end >= PHQ9_CUTOFF
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeWindow {
    pub participant_id: String,
    pub start_date: NaiveDate,
    /// Inclusive; `start_date + 13 days`.
    pub end_date: NaiveDate,
    pub phq9_start: u8,
    pub phq9_end: u8,
    pub label: bool,
}

impl EpisodeWindow {
    pub fn new(participant_id: impl Into<String>, start_date: NaiveDate, phq9_start: u8, phq9_end: u8) -> Self {
        Self {
            participant_id: participant_id.into(),
            start_date,
            end_date: start_date + Duration::days(WINDOW_DAYS - 1),
            phq9_start,
            phq9_end,
            label: episode_label(phq9_start, phq9_end),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        date >= self.start_date && date <= self.end_date
    }
}

/// Consecutive assessments of a participant (baseline→midpoint,
/// midpoint→endpoint) each bound one two-week window starting on the
/// earlier assessment's date.
pub fn windows_from_phq9(records: &[Phq9Record]) -> Vec<EpisodeWindow> {
    let mut by_pid: BTreeMap<&str, Vec<&Phq9Record>> = BTreeMap::new();
    for r in records {
        by_pid.entry(r.participant_id.as_str()).or_default().push(r);
    }
    let mut out = Vec::new();
    for (pid, mut recs) in by_pid {
        recs.sort_by_key(|r| (r.assessment, r.date));
        for pair in recs.windows(2) {
            out.push(EpisodeWindow::new(pid, pair[0].date, pair[0].score, pair[1].score));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LabeledDay<T: Real> {
    pub participant_id: String,
    pub date: NaiveDate,
    pub features: FeatureVector<T>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("episode windows overlap for participant {participant_id}: {first} and {second}")]
pub struct OverlappingWindows {
    pub participant_id: String,
    pub first: NaiveDate,
    pub second: NaiveDate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelOutcome<T: Real> {
    pub days: Vec<LabeledDay<T>>,
    /// Days that fell outside every window of their participant.
    pub unlabeled: Vec<(String, NaiveDate)>,
}

/// Joins each day to the label of the window containing it.
pub fn label_days<T: Real>(
    day_vectors: Vec<DayVector<T>>,
    windows: &[EpisodeWindow],
) -> Result<LabelOutcome<T>, OverlappingWindows> {
    let mut by_pid: BTreeMap<&str, Vec<&EpisodeWindow>> = BTreeMap::new();
    for w in windows {
        by_pid.entry(w.participant_id.as_str()).or_default().push(w);
    }
    for (pid, ws) in by_pid.iter_mut() {
        ws.sort_by_key(|w| w.start_date);
        for pair in ws.windows(2) {
            if pair[1].start_date <= pair[0].end_date {
                return Err(OverlappingWindows {
                    participant_id: pid.to_string(),
                    first: pair[0].start_date,
                    second: pair[1].start_date,
                });
            }
        }
    }
    let mut days = Vec::with_capacity(day_vectors.len());
    let mut unlabeled = Vec::new();
    for dv in day_vectors {
        let label = by_pid
            .get(dv.participant_id.as_str())
            .and_then(|ws| ws.iter().find(|w| w.contains(dv.date)))
            .map(|w| w.label);
        match label {
            Some(label) => days.push(LabeledDay {
                participant_id: dv.participant_id,
                date: dv.date,
                features: dv.features,
                label,
            }),
            None => {
                log::warn!("day {} of {} lies outside every episode window; dropped", dv.date, dv.participant_id);
                unlabeled.push((dv.participant_id, dv.date));
            }
        }
    }
    Ok(LabelOutcome { days, unlabeled })
}
