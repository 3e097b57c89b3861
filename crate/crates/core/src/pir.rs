//! Pupil-iris ratio estimation from per-frame segmentation output.
//!
//! The two-box method: the iris and pupil radii of a frame are half the
//! horizontal extent of their bounding boxes. Frames with a low eye-open
//! probability are discarded up front, frames lacking either class are
//! skipped, and the session PIR is the ratio of the mean pupil radius to
//! the mean iris radius over the frames that contributed.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{BoundingBox, BurstSession, Detection, DetectionClass, FrameRecord, PirSample, SessionKey};
use crate::scalar::Real;

pub const DEFAULT_EYE_OPEN_THRESHOLD: f64 = 0.75;

/// Boxes narrower than this (pixels) cannot yield a radius.
pub const MIN_BOX_WIDTH_PX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    EyeClosed,
    MissingClass,
    DegenerateBox,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SkipReason::EyeClosed => "eye_closed",
            SkipReason::MissingClass => "missing_class",
            SkipReason::DegenerateBox => "degenerate_box",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("bounding box narrower than one pixel")]
pub struct DegenerateBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimationFailure {
    #[error("no frame in the session produced both radii")]
    NoValidFrames,
}

/// Highest-scoring iris and pupil detections of one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstancePick<T: Real> {
    pub iris: Detection<T>,
    pub pupil: Detection<T>,
}

/// Keeps frames whose eye-open probability is at least `threshold`, in order.
/// Returns the kept frames and the number dropped.
pub fn filter_open_frames<T: Real>(
    session: &BurstSession<T>,
    threshold: T,
) -> (Vec<&FrameRecord<T>>, usize) {
    let kept: Vec<_> = session.frames.iter().filter(|f| f.eye_open_prob >= threshold).collect();
    let skipped = session.frames.len() - kept.len();
    (kept, skipped)
}

fn better<T: Real>(cand: &Detection<T>, best: &Detection<T>) -> bool {
    // score, then larger area; equal candidates keep the earlier one
    match cand.score.partial_cmp(&best.score) {
        Some(Ordering::Greater) => true,
        Some(Ordering::Equal) => cand.bbox.area() > best.bbox.area(),
        _ => false,
    }
}

fn best_of<T: Real>(dets: &[Detection<T>], class: DetectionClass) -> Option<Detection<T>> {
    let mut best: Option<Detection<T>> = None;
    for d in dets.iter().filter(|d| d.class == class) {
        match &best {
            Some(b) if !better(d, b) => {}
            _ => best = Some(*d),
        }
    }
    best
}

/// Picks the best iris and the best pupil instance, or `MissingClass` when
/// either class is absent.
pub fn pick_instances<T: Real>(detections: &[Detection<T>]) -> Result<InstancePick<T>, SkipReason> {
    match (best_of(detections, DetectionClass::Iris), best_of(detections, DetectionClass::Pupil)) {
        (Some(iris), Some(pupil)) => Ok(InstancePick { iris, pupil }),
        _ => Err(SkipReason::MissingClass),
    }
}

/// Half the horizontal extent of the box.
pub fn box_radius<T: Real>(bbox: &BoundingBox<T>) -> Result<T, DegenerateBox> {
    let w = bbox.width();
    if !(w >= T::of(MIN_BOX_WIDTH_PX)) {
        return Err(DegenerateBox);
    }
    Ok(w / T::of(2.0))
}

/// Eye center from the pupil box: horizontal midpoint, and the bottom edge
/// raised by the (width-derived) pupil radius.
pub fn pupil_center<T: Real>(bbox: &BoundingBox<T>) -> Result<(T, T), DegenerateBox> {
    let r = box_radius(bbox)?;
    Ok(((bbox.x1 + bbox.x2) / T::of(2.0), bbox.y2 - r))
}

/// Per-frame measurement of a frame that contributed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMeasurement<T: Real> {
    pub iris_radius: T,
    pub pupil_radius: T,
    pub center: (T, T),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameDecision<T: Real> {
    Used(FrameMeasurement<T>),
    Skipped(SkipReason),
}

/// Pupil box not inside the iris box; only reported in strict mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ContainmentWarning {
    pub frame_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PirOptions<T: Real> {
    pub eye_open_threshold: T,
    pub strict_containment: bool,
}

impl<T: Real> Default for PirOptions<T> {
    fn default() -> Self {
        Self { eye_open_threshold: T::of(DEFAULT_EYE_OPEN_THRESHOLD), strict_containment: false }
    }
}

impl<T: Real> PirOptions<T> {
    pub fn with_threshold(threshold: T) -> Self {
        Self { eye_open_threshold: threshold, ..Self::default() }
    }
}

/// Per-frame decisions for a session, in frame order.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionTrace<T: Real> {
    pub decisions: Vec<FrameDecision<T>>,
    pub warnings: Vec<ContainmentWarning>,
}

impl<T: Real> SessionTrace<T> {
    pub fn used(&self) -> impl Iterator<Item = &FrameMeasurement<T>> {
        self.decisions.iter().filter_map(|d| match d {
            FrameDecision::Used(m) => Some(m),
            FrameDecision::Skipped(_) => None,
        })
    }

    pub fn skipped(&self) -> usize {
        self.decisions.iter().filter(|d| matches!(d, FrameDecision::Skipped(_))).count()
    }
}

fn measure<T: Real>(frame: &FrameRecord<T>) -> Result<(FrameMeasurement<T>, InstancePick<T>), SkipReason> {
    let pick = pick_instances(&frame.detections)?;
    let iris_radius = box_radius(&pick.iris.bbox).map_err(|_| SkipReason::DegenerateBox)?;
    let pupil_radius = box_radius(&pick.pupil.bbox).map_err(|_| SkipReason::DegenerateBox)?;
    let center = pupil_center(&pick.pupil.bbox).map_err(|_| SkipReason::DegenerateBox)?;
    Ok((FrameMeasurement { iris_radius, pupil_radius, center }, pick))
}

/// Decides, frame by frame, whether each frame contributes and with what radii.
pub fn trace_session<T: Real>(session: &BurstSession<T>, opts: &PirOptions<T>) -> SessionTrace<T> {
    let mut decisions = Vec::with_capacity(session.frames.len());
    let mut warnings = Vec::new();
    for (i, frame) in session.frames.iter().enumerate() {
        if !(frame.eye_open_prob >= opts.eye_open_threshold) {
            decisions.push(FrameDecision::Skipped(SkipReason::EyeClosed));
            continue;
        }
        match measure(frame) {
            Ok((m, pick)) => {
                if opts.strict_containment && !pick.iris.bbox.contains(&pick.pupil.bbox) {
                    log::warn!("{}: frame {i} pupil box not inside iris box", session.key());
                    warnings.push(ContainmentWarning { frame_index: i });
                }
                decisions.push(FrameDecision::Used(m));
            }
            Err(reason) => decisions.push(FrameDecision::Skipped(reason)),
        }
    }
    SessionTrace { decisions, warnings }
}

/// Estimates the session PIR as mean pupil radius over mean iris radius.
pub fn estimate_session_pir<T: Real>(
    session: &BurstSession<T>,
    threshold: T,
) -> Result<PirSample<T>, EstimationFailure> {
    estimate_session_pir_with(session, &PirOptions::with_threshold(threshold))
}

pub fn estimate_session_pir_with<T: Real>(
    session: &BurstSession<T>,
    opts: &PirOptions<T>,
) -> Result<PirSample<T>, EstimationFailure> {
    let trace = trace_session(session, opts);
    let used: Vec<_> = trace.used().copied().collect();
    if used.is_empty() {
        return Err(EstimationFailure::NoValidFrames);
    }
    let n = T::of_usize(used.len());
    let iris = used.iter().map(|m| m.iris_radius).sum::<T>() / n;
    let pupil = used.iter().map(|m| m.pupil_radius).sum::<T>() / n;
    let cx = used.iter().map(|m| m.center.0).sum::<T>() / n;
    let cy = used.iter().map(|m| m.center.1).sum::<T>() / n;
    Ok(PirSample {
        participant_id: session.participant_id.clone(),
        eye: session.eye,
        timestamp: session.start().expect("session with used frames is non-empty"),
        pir: pupil / iris,
        iris_radius_px: iris,
        pupil_radius_px: pupil,
        eye_center: (cx, cy),
        frames_used: used.len(),
        frames_skipped: trace.skipped(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult<T: Real> {
    pub samples: Vec<PirSample<T>>,
    pub failures: Vec<(SessionKey, EstimationFailure)>,
}

/// Runs [`estimate_session_pir`] over every session, in parallel, keeping input order.
pub fn estimate_batch<T: Real>(sessions: &[BurstSession<T>], threshold: T) -> BatchResult<T> {
    let opts = PirOptions::with_threshold(threshold);
    let outcomes: Vec<_> =
        sessions.par_iter().map(|s| estimate_session_pir_with(s, &opts)).collect();
    let mut samples = Vec::new();
    let mut failures = Vec::new();
    for (s, outcome) in sessions.iter().zip(outcomes) {
        match outcome {
            Ok(p) => samples.push(p),
            Err(e) => failures.push((s.key(), e)),
        }
    }
    BatchResult { samples, failures }
}
