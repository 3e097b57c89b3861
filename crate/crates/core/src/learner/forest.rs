//! Bootstrap random forest and mean-decrease-in-impurity importances.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{build_tree, gini, FeaturePool, TreeNode, TreeParams};
use super::{Dataset, LearnerError, MODEL_FORMAT_VERSION};
use crate::scalar::Real;
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// ⌈√d⌉ features per split.
    Sqrt,
    All,
    Count(usize),
}

impl MaxFeatures {
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((d as f64).sqrt().ceil() as usize).clamp(1, d.max(1)),
            MaxFeatures::All => d,
            MaxFeatures::Count(k) => k.clamp(1, d.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_features: MaxFeatures::Sqrt, bootstrap: true, tree: TreeParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ForestModel<T: Real> {
    pub feature_names: Vec<String>,
    pub params: ForestParams,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<TreeNode<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct ForestFile<T: Real> {
    format: String,
    version: u32,
    #[serde(flatten)]
    forest: ForestModel<T>,
}

const FOREST_FORMAT: &str = "pupilpipe-random-forest";

impl<T: Real> ForestModel<T> {
    fn check(&self, row: &[T]) -> Result<(), LearnerError> {
        if row.len() != self.feature_names.len() {
            return Err(LearnerError::DimensionMismatch { expected: self.feature_names.len(), got: row.len() });
        }
        Ok(())
    }

    /// Mean of the trees' leaf probabilities.
    pub fn predict_score(&self, row: &[T]) -> Result<T, LearnerError> {
        self.check(row)?;
        Ok(self.trees.iter().map(|t| t.score(row)).sum::<T>() / T::of_usize(self.trees.len()))
    }

    /// Majority vote of per-tree labels (score > 0.5); ties vote negative.
    pub fn predict_vote(&self, row: &[T]) -> Result<bool, LearnerError> {
        self.check(row)?;
        let yes = self.trees.iter().filter(|t| t.score(row) > T::of(0.5)).count();
        Ok(2 * yes > self.trees.len())
    }

    pub fn to_json(&self) -> String {
        let file = ForestFile { format: FOREST_FORMAT.into(), version: MODEL_FORMAT_VERSION, forest: self.clone() };
        serde_json::to_string(&file).expect("forest serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LearnerError> {
        let file: ForestFile<T> = serde_json::from_str(s).map_err(|e| LearnerError::Format(e.to_string()))?;
        if file.format != FOREST_FORMAT || file.version != MODEL_FORMAT_VERSION {
            return Err(LearnerError::Format(format!("unsupported {} v{}", file.format, file.version)));
        }
        Ok(file.forest)
    }
}

/// Fits `n_trees` trees, each on a bootstrap resample (when enabled) with a
/// random feature subset drawn at every split. Tree `i` uses a seed derived
/// from `(seed, i)`, so the forest does not depend on thread scheduling.
pub fn fit_forest<T: Real>(train: &Dataset<T>, params: ForestParams, seed: u64) -> Result<ForestModel<T>, LearnerError> {
    if train.is_empty() {
        return Err(LearnerError::Empty);
    }
    if params.n_trees == 0 {
        return Err(LearnerError::InvalidParameter("n_trees must be ≥ 1".into()));
    }
    let d = train.n_features();
    let per_split = params.max_features.resolve(d);
    let tree_seeds: Vec<u64> = (0..params.n_trees as u64).map(|i| derive_seed(seed, i)).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = rng_from(s);
            let n = train.len();
            let mut idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut pool = if per_split >= d {
                FeaturePool::All
            } else {
                FeaturePool::Random { per_split, rng: &mut rng }
            };
            build_tree(&train.rows, &train.labels, d, params.tree, &mut idx, &mut pool)
        })
        .collect();
    Ok(ForestModel { feature_names: train.feature_names.clone(), params, tree_seeds, trees })
}

/// Per-feature importances in the forest's feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeatureImportances<T: Real> {
    pub names: Vec<String>,
    pub values: Vec<T>,
}

impl<T: Real> FeatureImportances<T> {
    pub fn get(&self, name: &str) -> Option<T> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, T)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }
}

/// Gini importance: for every split, the node's share of the tree's
/// training rows times its impurity decrease, summed per feature, averaged
/// over trees and normalised to sum to one (all zeros if nothing split).
pub fn gini_importances<T: Real>(forest: &ForestModel<T>, train: &Dataset<T>) -> Result<FeatureImportances<T>, LearnerError> {
    let d = forest.feature_names.len();
    if train.n_features() != d {
        return Err(LearnerError::DimensionMismatch { expected: d, got: train.n_features() });
    }
    let mut totals = vec![0.0f64; d];
    for tree in &forest.trees {
        let (a, b) = tree.class_counts();
        let n_tree = (a + b) as f64;
        tree.for_each_split(&mut |f, parent, left, right| {
            let n = (parent.0 + parent.1) as f64;
            let nl = (left.0 + left.1) as f64;
            let nr = (right.0 + right.1) as f64;
            let decrease = gini(parent) - nl / n * gini(left) - nr / n * gini(right);
            totals[f] += n / n_tree * decrease.max(0.0);
        });
    }
    let k = forest.trees.len().max(1) as f64;
    let means: Vec<f64> = totals.iter().map(|t| t / k).collect();
    let sum: f64 = means.iter().sum();
    let values = means.iter().map(|&m| T::of(if sum > 0.0 { m / sum } else { 0.0 })).collect();
    Ok(FeatureImportances { names: forest.feature_names.clone(), values })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FsSelection {
    pub features: Vec<String>,
    /// No feature exceeded the mean; every maximal feature was kept instead.
    pub fallback: bool,
}

/// Keeps features whose importance exceeds the mean importance.
pub fn select_fs<T: Real>(importances: &FeatureImportances<T>) -> Result<FsSelection, LearnerError> {
    if importances.values.is_empty() {
        return Err(LearnerError::Empty);
    }
    let mean = crate::scalar::mean(&importances.values).expect("non-empty");
    let above: Vec<String> =
        importances.iter().filter(|(_, v)| *v > mean).map(|(n, _)| n.to_string()).collect();
    if !above.is_empty() {
        return Ok(FsSelection { features: above, fallback: false });
    }
    let max = importances.values.iter().copied().fold(T::neg_infinity(), T::max);
    log::warn!("no importance exceeds the mean; keeping all maximal features");
    Ok(FsSelection {
        features: importances.iter().filter(|(_, v)| *v == max).map(|(n, _)| n.to_string()).collect(),
        fallback: true,
    })
}
