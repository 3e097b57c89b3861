//! Supervised learning components: SMOTE, CART trees, random forests and
//! classification metrics.

pub mod dataset;
pub mod forest;
pub mod metrics;
pub mod smote;
pub mod tree;

use thiserror::Error;

pub use dataset::{Dataset, GroupId};
pub use forest::{fit_forest, gini_importances, select_fs, FeatureImportances, ForestModel, ForestParams, FsSelection, MaxFeatures};
pub use metrics::{compute_metrics, roc_auc, Confusion, MetricsReport, Prediction};
pub use smote::{balance_training, smote_oversample, DEFAULT_SMOTE_K};
pub use tree::{fit_tree, predict_score, DecisionTree, TreeNode, TreeParams};

/// Serialization format version for fitted models.
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LearnerError {
    #[error("need at least 2 minority rows, got {0}")]
    TooFewSamples(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("training data contains a single class")]
    SingleClass,
    #[error("AUROC undefined: predictions contain a single class")]
    SingleClassAuroc,
    #[error("row has {got} features, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("empty input")]
    Empty,
    #[error("model format: {0}")]
    Format(String),
}
