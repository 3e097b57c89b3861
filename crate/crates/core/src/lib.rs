//! Pupil-iris ratio pipeline: per-frame eye segmentations to PIR samples,
//! daily epoch features, correlation analysis and depressive-episode
//! classification with leave-one-participant-out evaluation.
//!
//! Numeric code is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

pub mod evaluation;
pub mod features;
pub mod io;
pub mod learner;
pub mod model;
pub mod pipeline;
pub mod pir;
pub mod scalar;
pub mod seed;
pub mod stats;
pub mod synthetic;

pub use scalar::Real;

pub type BoundingBox = model::BoundingBox<f64>;
pub type Detection = model::Detection<f64>;
pub type FrameRecord = model::FrameRecord<f64>;
pub type BurstSession = model::BurstSession<f64>;
pub type PirSample = model::PirSample<f64>;
pub type FeatureVector = features::FeatureVector<f64>;
pub type LabeledDay = features::LabeledDay<f64>;
pub type FeatureCorrelation = stats::FeatureCorrelation<f64>;
pub type Dataset = learner::Dataset<f64>;
pub type DecisionTree = learner::DecisionTree<f64>;
pub type ForestModel = learner::ForestModel<f64>;
pub type Cohort = synthetic::Cohort<f64>;
pub type EvalReport = evaluation::EvalReport<f64>;
pub type FoldModel = evaluation::FoldModel<f64>;
