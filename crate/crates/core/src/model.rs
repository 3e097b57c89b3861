//! Shared data model: detections, frames, burst sessions and PIR samples.

use std::collections::BTreeMap;
use std::fmt;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Session bursts longer than this (seconds) are reported as suspicious.
pub const MAX_SESSION_SPAN_SECS: i64 = 15;
/// 2.5 Hz for 10 s, plus slack.
pub const MAX_SESSION_FRAMES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EyeSide {
    Left,
    Right,
}

impl EyeSide {
    pub const ALL: [EyeSide; 2] = [EyeSide::Left, EyeSide::Right];

    pub fn as_str(self) -> &'static str {
        match self {
            EyeSide::Left => "left",
            EyeSide::Right => "right",
        }
    }
}

impl fmt::Display for EyeSide {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EyeSide {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(EyeSide::Left),
            "right" => Ok(EyeSide::Right),
            other => Err(format!("unknown eye side {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionClass {
    Iris,
    Pupil,
}

impl fmt::Display for DetectionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DetectionClass::Iris => "iris",
            DetectionClass::Pupil => "pupil",
        })
    }
}

/// Axis-aligned box in image coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BoundingBox<T: Real> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Real> BoundingBox<T> {
    /// Builds a box without checking its invariants. See [`BoundingBox::violations`].
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Self {
        Self { x1, y1, x2, y2 }
    }

    /// Builds a box, rejecting it if any invariant fails.
    pub fn checked(x1: T, y1: T, x2: T, y2: T) -> Result<Self, Vec<Violation>> {
        let b = Self::new(x1, y1, x2, y2);
        let v = b.violations();
        if v.is_empty() {
            Ok(b)
        } else {
            Err(v)
        }
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn contains(&self, other: &Self) -> bool {
        other.x1 >= self.x1 && other.y1 >= self.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }

    pub fn scaled(&self, s: T) -> Self {
        Self::new(self.x1 * s, self.y1 * s, self.x2 * s, self.y2 * s)
    }

    pub fn violations(&self) -> Vec<Violation> {
        let coords = [self.x1, self.y1, self.x2, self.y2];
        if coords.iter().any(|c| !c.is_finite()) {
            return vec![Violation::NonFiniteCoordinate];
        }
        let mut out = Vec::new();
        if coords.iter().any(|c| *c < T::zero()) {
            out.push(Violation::NegativeCoordinate);
        }
        if self.x2 <= self.x1 {
            out.push(Violation::InvertedX { x1: self.x1.as_f64(), x2: self.x2.as_f64() });
        }
        if self.y2 <= self.y1 {
            out.push(Violation::InvertedY { y1: self.y1.as_f64(), y2: self.y2.as_f64() });
        }
        out
    }
}

/// One segmentation instance within an eye frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Detection<T: Real> {
    pub class: DetectionClass,
    pub score: T,
    #[serde(rename = "box")]
    pub bbox: BoundingBox<T>,
}

impl<T: Real> Detection<T> {
    pub fn new(class: DetectionClass, score: T, bbox: BoundingBox<T>) -> Self {
        Self { class, score, bbox }
    }
}

/// Segmentation output for one timestamped eye frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FrameRecord<T: Real> {
    pub participant_id: String,
    pub session_id: String,
    pub eye: EyeSide,
    pub timestamp: NaiveDateTime,
    pub eye_open_prob: T,
    pub detections: Vec<Detection<T>>,
}

/// A single reason a frame record is malformed.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    InvertedX { x1: f64, x2: f64 },
    InvertedY { y1: f64, y2: f64 },
    NegativeCoordinate,
    NonFiniteCoordinate,
    ScoreOutOfRange(f64),
    EyeOpenProbOutOfRange(f64),
    UnparseableTimestamp(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::InvertedX { x1, x2 } => write!(f, "x2 ≤ x1 ({x2} ≤ {x1})"),
            Violation::InvertedY { y1, y2 } => write!(f, "y2 ≤ y1 ({y2} ≤ {y1})"),
            Violation::NegativeCoordinate => f.write_str("negative box coordinate"),
            Violation::NonFiniteCoordinate => f.write_str("non-finite box coordinate"),
            Violation::ScoreOutOfRange(s) => write!(f, "score out of [0,1]: {s}"),
            Violation::EyeOpenProbOutOfRange(p) => write!(f, "eye_open_prob out of [0,1]: {p}"),
            Violation::UnparseableTimestamp(s) => write!(f, "unparseable timestamp {s:?}"),
        }
    }
}

fn unit_interval<T: Real>(v: T) -> bool {
    v >= T::zero() && v <= T::one()
}

/// Checks box geometry and probability ranges. Never fails; returns the
/// violations found, empty when the record is well formed.
pub fn validate_frame<T: Real>(record: &FrameRecord<T>) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    if !unit_interval(record.eye_open_prob) {
        out.push(Violation::EyeOpenProbOutOfRange(record.eye_open_prob.as_f64()));
    }
    for det in &record.detections {
        if !unit_interval(det.score) {
            out.push(Violation::ScoreOutOfRange(det.score.as_f64()));
        }
        out.extend(det.bbox.violations());
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Identity of a burst: one eye of one capture session.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SessionKey {
    pub participant_id: String,
    pub session_id: String,
    pub eye: EyeSide,
}

impl fmt::Display for SessionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.participant_id, self.session_id, self.eye)
    }
}

/// Frames of one ~10 s capture burst for one eye, in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BurstSession<T: Real> {
    pub participant_id: String,
    pub session_id: String,
    pub eye: EyeSide,
    pub frames: Vec<FrameRecord<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionWarning {
    SpanTooLong { secs: i64 },
    TooManyFrames { count: usize },
}

impl<T: Real> BurstSession<T> {
    pub fn key(&self) -> SessionKey {
        SessionKey {
            participant_id: self.participant_id.clone(),
            session_id: self.session_id.clone(),
            eye: self.eye,
        }
    }

    /// Timestamp of the first frame, if any.
    pub fn start(&self) -> Option<NaiveDateTime> {
        self.frames.first().map(|f| f.timestamp)
    }

    /// Soft invariants: reported, never enforced.
    pub fn warnings(&self) -> Vec<SessionWarning> {
        let mut out = Vec::new();
        if let (Some(a), Some(b)) = (self.frames.first(), self.frames.last()) {
            let secs = (b.timestamp - a.timestamp).num_seconds();
            if secs > MAX_SESSION_SPAN_SECS {
                out.push(SessionWarning::SpanTooLong { secs });
            }
        }
        if self.frames.len() > MAX_SESSION_FRAMES {
            out.push(SessionWarning::TooManyFrames { count: self.frames.len() });
        }
        out
    }
}

/// A second record sharing (participant, session, eye, timestamp) with an earlier one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateFrame {
    pub key: SessionKey,
    pub timestamp: NaiveDateTime,
}

impl fmt::Display for DuplicateFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "duplicate frame {} at {}", self.key, self.timestamp)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupedSessions<T: Real> {
    pub sessions: Vec<BurstSession<T>>,
    pub duplicates: Vec<DuplicateFrame>,
}

/// Groups frame records into burst sessions keyed by (participant, session, eye).
///
/// Frames are time-sorted within each session; sessions are ordered by
/// participant, session start time, eye, then session id. When two records
/// share a timestamp within a session the first one seen is kept and the
/// other is reported in `duplicates`.
pub fn group_sessions<T, I>(records: I) -> GroupedSessions<T>
where
    T: Real,
    I: IntoIterator<Item = FrameRecord<T>>,
{
    let mut buckets: BTreeMap<SessionKey, BTreeMap<NaiveDateTime, FrameRecord<T>>> =
        BTreeMap::new();
    let mut duplicates = Vec::new();
    for rec in records {
        let key = SessionKey {
            participant_id: rec.participant_id.clone(),
            session_id: rec.session_id.clone(),
            eye: rec.eye,
        };
        let frames = buckets.entry(key.clone()).or_default();
        match frames.entry(rec.timestamp) {
            std::collections::btree_map::Entry::Occupied(_) => {
                log::warn!("duplicate frame {key} at {}; keeping first", rec.timestamp);
                duplicates.push(DuplicateFrame { key, timestamp: rec.timestamp });
            }
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(rec);
            }
        }
    }
    let mut sessions: Vec<BurstSession<T>> = buckets
        .into_iter()
        .map(|(key, frames)| BurstSession {
            participant_id: key.participant_id,
            session_id: key.session_id,
            eye: key.eye,
            frames: frames.into_values().collect(),
        })
        .collect();
    sessions.sort_by(|a, b| {
        (&a.participant_id, a.start(), a.eye, &a.session_id)
            .cmp(&(&b.participant_id, b.start(), b.eye, &b.session_id))
    });
    GroupedSessions { sessions, duplicates }
}

/// One pupil-iris ratio estimate for one eye of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PirSample<T: Real> {
    pub participant_id: String,
    pub eye: EyeSide,
    /// Session start time.
    pub timestamp: NaiveDateTime,
    pub pir: T,
    pub iris_radius_px: T,
    pub pupil_radius_px: T,
    pub eye_center: (T, T),
    pub frames_used: usize,
    pub frames_skipped: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn ts(h: u32, m: u32, s: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2024, 3, 1).unwrap().and_hms_opt(h, m, s).unwrap()
    }

    fn det(class: DetectionClass, score: f64, b: [f64; 4]) -> Detection<f64> {
        Detection::new(class, score, BoundingBox::new(b[0], b[1], b[2], b[3]))
    }

    fn frame(pid: &str, sid: &str, eye: EyeSide, t: NaiveDateTime) -> FrameRecord<f64> {
        FrameRecord {
            participant_id: pid.into(),
            session_id: sid.into(),
            eye,
            timestamp: t,
            eye_open_prob: 0.9,
            detections: vec![
                det(DetectionClass::Iris, 0.9, [10.0, 10.0, 50.0, 50.0]),
                det(DetectionClass::Pupil, 0.8, [22.0, 22.0, 38.0, 38.0]),
            ],
        }
    }

    #[test]
    fn inverted_box_is_reported() {
        let mut f = frame("P1", "s1", EyeSide::Left, ts(8, 0, 0));
        f.detections[0].bbox = BoundingBox::new(10.0, 10.0, 5.0, 20.0);
        let v = validate_frame(&f).unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().starts_with("x2 ≤ x1"));
    }

    #[test]
    fn well_formed_frame_passes() {
        assert!(validate_frame(&frame("P1", "s1", EyeSide::Left, ts(8, 0, 0))).is_ok());
    }

    #[test]
    fn score_out_of_range() {
        let mut f = frame("P1", "s1", EyeSide::Left, ts(8, 0, 0));
        f.detections[1].score = 1.3;
        let v = validate_frame(&f).unwrap_err();
        assert_eq!(v, vec![Violation::ScoreOutOfRange(1.3)]);
        assert!(v[0].to_string().contains("score out of [0,1]"));
    }

    #[test]
    fn eye_open_prob_checked() {
        let mut f = frame("P1", "s1", EyeSide::Left, ts(8, 0, 0));
        f.eye_open_prob = -0.1;
        assert!(matches!(
            validate_frame(&f).unwrap_err()[0],
            Violation::EyeOpenProbOutOfRange(_)
        ));
    }

    #[test]
    fn groups_by_participant_session_eye() {
        let mut recs = Vec::new();
        for (sid, h) in [("s1", 8), ("s2", 14)] {
            for eye in EyeSide::ALL {
                recs.push(frame("P1", sid, eye, ts(h, 0, 0)));
            }
        }
        recs.push(frame("P1", "s1", EyeSide::Left, ts(8, 0, 1)));
        recs.push(frame("P1", "s2", EyeSide::Right, ts(14, 0, 1)));
        let g = group_sessions(recs);
        assert_eq!(g.sessions.len(), 4);
        assert!(g.duplicates.is_empty());
        let keys: Vec<_> = g.sessions.iter().map(|s| (s.session_id.as_str(), s.eye)).collect();
        assert_eq!(
            keys,
            vec![
                ("s1", EyeSide::Left),
                ("s1", EyeSide::Right),
                ("s2", EyeSide::Left),
                ("s2", EyeSide::Right)
            ]
        );
        assert_eq!(g.sessions[0].frames.len(), 2);
    }

    #[test]
    fn empty_stream() {
        let g = group_sessions(Vec::<FrameRecord<f64>>::new());
        assert!(g.sessions.is_empty());
    }

    #[test]
    fn duplicate_keeps_first() {
        let a = frame("P1", "s1", EyeSide::Left, ts(8, 0, 0));
        let mut b = a.clone();
        b.eye_open_prob = 0.1;
        let g = group_sessions(vec![a.clone(), b]);
        assert_eq!(g.duplicates.len(), 1);
        assert_eq!(g.sessions[0].frames, vec![a]);
    }

    #[test]
    fn session_warnings() {
        let mut s = BurstSession {
            participant_id: "P".into(),
            session_id: "s".into(),
            eye: EyeSide::Left,
            frames: vec![frame("P", "s", EyeSide::Left, ts(8, 0, 0))],
        };
        assert!(s.warnings().is_empty());
        s.frames.push(frame("P", "s", EyeSide::Left, ts(8, 0, 20)));
        assert_eq!(s.warnings(), vec![SessionWarning::SpanTooLong { secs: 20 }]);
    }
}
