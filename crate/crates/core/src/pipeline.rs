//! Glue from frame records to labeled day vectors.

use crate::features::{
    build_day_vectors, filter_pir_range, label_days, windows_from_phq9, DroppedDay, LabeledDay, OverlappingWindows,
    Phq9Record, DEFAULT_PIR_MAX, DEFAULT_PIR_MIN,
};
use crate::model::{group_sessions, FrameRecord};
use crate::pir::{estimate_batch, BatchResult, DEFAULT_EYE_OPEN_THRESHOLD};
use crate::scalar::Real;
use crate::synthetic::Cohort;
use chrono::NaiveDate;

#[derive(Debug, Clone, PartialEq)]
pub struct DayAssembly<T: Real> {
    pub days: Vec<LabeledDay<T>>,
    pub dropped: Vec<(String, NaiveDate, DroppedDay)>,
    pub unlabeled: Vec<(String, NaiveDate)>,
    pub samples_in_range: usize,
}

/// Range filter, day vectors and window labels.
pub fn assemble_days<T: Real>(
    batch: &BatchResult<T>,
    phq9: &[Phq9Record],
    lo: T,
    hi: T,
) -> Result<DayAssembly<T>, OverlappingWindows> {
    let kept = filter_pir_range(&batch.samples, lo, hi);
    let built = build_day_vectors(&kept);
    let labeled = label_days(built.days, &windows_from_phq9(phq9))?;
    Ok(DayAssembly { days: labeled.days, dropped: built.dropped, unlabeled: labeled.unlabeled, samples_in_range: kept.len() })
}

/// Frames to PIR samples with the default eye-open threshold.
pub fn estimate_frames<T: Real>(frames: Vec<FrameRecord<T>>) -> BatchResult<T> {
    let grouped = group_sessions(frames);
    estimate_batch(&grouped.sessions, T::of(DEFAULT_EYE_OPEN_THRESHOLD))
}

/// The full default pipeline on an in-memory cohort.
pub fn cohort_days<T: Real>(cohort: &Cohort<T>) -> Result<DayAssembly<T>, OverlappingWindows> {
    let batch = estimate_frames(cohort.frames.clone());
    assemble_days(&batch, &cohort.phq9, T::of(DEFAULT_PIR_MIN), T::of(DEFAULT_PIR_MAX))
}
