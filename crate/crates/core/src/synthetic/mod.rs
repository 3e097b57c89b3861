//! Synthetic data: eye rasters, a classical segmenter and whole cohorts.

pub mod cohort;
pub mod raster;
pub mod segment;

pub use cohort::{
    emit_gold_episode_labels, generate_cohort, participant_id, Cohort, CohortConfig, EffectSizes, GroundTruth,
    InvalidConfig, ParticipantTruth, SessionTruth, TruncatedNormal, TruthRecord, WindowTruth,
};
pub use raster::{render_eye_raster, EyeRasterSpec, Raster, RasterError};
pub use segment::{multi_otsu, segment_raster, SegmentError, SegmentParams};
