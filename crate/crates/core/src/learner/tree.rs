//! CART classification tree with Gini impurity.
//!
//! Candidate thresholds are midpoints between consecutive distinct sorted
//! values. The best split maximises the impurity decrease; ties keep the
//! lower feature index, then the lower threshold. A row goes left when its
//! value is `≤ threshold`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LearnerError, MODEL_FORMAT_VERSION};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until another rule stops.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub min_impurity_decrease: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: None, min_samples_leaf: 1, min_impurity_decrease: 0.0 }
    }
}

impl TreeParams {
    pub fn new(max_depth: Option<usize>, min_samples_leaf: usize) -> Self {
        Self { max_depth, min_samples_leaf, ..Self::default() }
    }
}

/// Class counts are (negatives, positives) of the training rows reaching the node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case", bound = "")]
pub enum TreeNode<T: Real> {
    Split {
        feature_index: usize,
        threshold: T,
        class_counts: (usize, usize),
        left: Box<TreeNode<T>>,
        right: Box<TreeNode<T>>,
    },
    Leaf {
        class_counts: (usize, usize),
    },
}

pub(crate) fn gini(counts: (usize, usize)) -> f64 {
    let n = (counts.0 + counts.1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (counts.0 as f64 / n, counts.1 as f64 / n);
    1.0 - a * a - b * b
}

impl<T: Real> TreeNode<T> {
    pub fn class_counts(&self) -> (usize, usize) {
        match self {
            TreeNode::Split { class_counts, .. } | TreeNode::Leaf { class_counts } => *class_counts,
        }
    }

    /// Fraction of positive training rows in the leaf reached by `row`.
    pub fn score(&self, row: &[T]) -> T {
        let mut node = self;
        loop {
            match node {
                TreeNode::Split { feature_index, threshold, left, right, .. } => {
                    node = if row[*feature_index] <= *threshold { left } else { right };
                }
                TreeNode::Leaf { class_counts: (neg, pos) } => {
                    return T::of_usize(*pos) / T::of_usize(neg + pos);
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            TreeNode::Leaf { .. } => 0,
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
            TreeNode::Leaf { .. } => 1,
        }
    }

    /// Collapses every node at `max_depth` into a leaf. Greedy CART growth
    /// does not look ahead, so this equals refitting with that depth limit.
    pub fn truncated(&self, max_depth: usize) -> Self {
        match self {
            TreeNode::Split { feature_index, threshold, class_counts, left, right } if max_depth > 0 => {
                TreeNode::Split {
                    feature_index: *feature_index,
                    threshold: *threshold,
                    class_counts: *class_counts,
                    left: Box::new(left.truncated(max_depth - 1)),
                    right: Box::new(right.truncated(max_depth - 1)),
                }
            }
            _ => TreeNode::Leaf { class_counts: self.class_counts() },
        }
    }

    /// Visits every split as (feature, parent counts, left counts, right counts).
    pub(crate) fn for_each_split(&self, f: &mut impl FnMut(usize, (usize, usize), (usize, usize), (usize, usize))) {
        if let TreeNode::Split { feature_index, class_counts, left, right, .. } = self {
            f(*feature_index, *class_counts, left.class_counts(), right.class_counts());
            left.for_each_split(f);
            right.for_each_split(f);
        }
    }
}

/// A fitted tree together with the feature layout it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DecisionTree<T: Real> {
    pub feature_names: Vec<String>,
    pub params: TreeParams,
    pub root: TreeNode<T>,
}

#[derive(Serialize, Deserialize)]
#[serde(bound = "")]
struct TreeFile<T: Real> {
    format: String,
    version: u32,
    #[serde(flatten)]
    tree: DecisionTree<T>,
}

const TREE_FORMAT: &str = "pupilpipe-decision-tree";

impl<T: Real> DecisionTree<T> {
    pub fn predict_score(&self, row: &[T]) -> Result<T, LearnerError> {
        if row.len() != self.feature_names.len() {
            return Err(LearnerError::DimensionMismatch { expected: self.feature_names.len(), got: row.len() });
        }
        Ok(self.root.score(row))
    }

    pub fn truncated(&self, max_depth: Option<usize>) -> Self {
        let root = match max_depth {
            Some(d) => self.root.truncated(d),
            None => self.root.clone(),
        };
        Self { feature_names: self.feature_names.clone(), params: TreeParams { max_depth, ..self.params }, root }
    }

    /// Versioned JSON with the tree as nested objects.
    pub fn to_json(&self) -> String {
        let file = TreeFile { format: TREE_FORMAT.into(), version: MODEL_FORMAT_VERSION, tree: self.clone() };
        serde_json::to_string(&file).expect("tree serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LearnerError> {
        let file: TreeFile<T> = serde_json::from_str(s).map_err(|e| LearnerError::Format(e.to_string()))?;
        if file.format != TREE_FORMAT || file.version != MODEL_FORMAT_VERSION {
            return Err(LearnerError::Format(format!("unsupported {} v{}", file.format, file.version)));
        }
        Ok(file.tree)
    }
}

/// Feature sub-sampling for one tree build.
pub(crate) enum FeaturePool<'a> {
    All,
    Random { per_split: usize, rng: &'a mut ChaCha8Rng },
}

struct Builder<'a, T: Real> {
    rows: &'a [Vec<T>],
    labels: &'a [bool],
    params: TreeParams,
    n_features: usize,
    scratch: Vec<(T, bool)>,
}

struct BestSplit<T> {
    feature: usize,
    threshold: T,
    gain: f64,
}

fn counts_of(labels: &[bool], idx: &[usize]) -> (usize, usize) {
    let pos = idx.iter().filter(|&&i| labels[i]).count();
    (idx.len() - pos, pos)
}

impl<T: Real> Builder<'_, T> {
    fn best_split_on(&mut self, idx: &[usize], feature: usize, parent: (usize, usize)) -> Option<BestSplit<T>> {
        let min_leaf = self.params.min_samples_leaf.max(1);
        self.scratch.clear();
        self.scratch.extend(idx.iter().map(|&i| (self.rows[i][feature], self.labels[i])));
        self.scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature"));
        let n = self.scratch.len();
        let parent_gini = gini(parent);
        let mut left = (0usize, 0usize);
        let mut best: Option<BestSplit<T>> = None;
        for i in 1..n {
            let (v_prev, l_prev) = self.scratch[i - 1];
            if l_prev {
                left.1 += 1;
            } else {
                left.0 += 1;
            }
            let v = self.scratch[i].0;
            if v_prev == v || i < min_leaf || n - i < min_leaf {
                continue;
            }
            let right = (parent.0 - left.0, parent.1 - left.1);
            let gain = parent_gini
                - (i as f64 / n as f64) * gini(left)
                - ((n - i) as f64 / n as f64) * gini(right);
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = (v_prev + v) / T::of(2.0);
                if !(threshold < v) {
                    threshold = v_prev;
                }
                best = Some(BestSplit { feature, threshold, gain });
            }
        }
        best
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, pool: &mut FeaturePool<'_>) -> TreeNode<T> {
        let counts = counts_of(self.labels, idx);
        let min_leaf = self.params.min_samples_leaf.max(1);
        let at_depth_limit = self.params.max_depth.is_some_and(|d| depth >= d);
        if counts.0 == 0 || counts.1 == 0 || at_depth_limit || idx.len() < 2 * min_leaf {
            return TreeNode::Leaf { class_counts: counts };
        }
        let features: Vec<usize> = match pool {
            FeaturePool::All => (0..self.n_features).collect(),
            FeaturePool::Random { per_split, rng } => sample_features(self.n_features, *per_split, rng),
        };
        let mut best: Option<BestSplit<T>> = None;
        for f in features {
            if let Some(s) = self.best_split_on(idx, f, counts) {
                if best.as_ref().is_none_or(|b| s.gain > b.gain) {
                    best = Some(s);
                }
            }
        }
        let Some(best) = best else {
            return TreeNode::Leaf { class_counts: counts };
        };
        // zero-gain splits are allowed at the default threshold of 0
        if best.gain + 1e-12 < self.params.min_impurity_decrease {
            return TreeNode::Leaf { class_counts: counts };
        }
        let rows = self.rows;
        let mid = partition(idx, |&i| rows[i][best.feature] <= best.threshold);
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1, pool);
        let right = self.build(r, depth + 1, pool);
        TreeNode::Split {
            feature_index: best.feature,
            threshold: best.threshold,
            class_counts: counts,
            left: Box::new(left),
            right: Box::new(right),
        }
    }
}

/// Stable partition; returns the number of elements satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(&usize) -> bool) -> usize {
    let (yes, no): (Vec<usize>, Vec<usize>) = idx.iter().partition(|i| pred(i));
    let mid = yes.len();
    for (slot, v) in idx.iter_mut().zip(yes.into_iter().chain(no)) {
        *slot = v;
    }
    mid
}

/// `k` distinct features out of `n`, returned in ascending order.
fn sample_features(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let k = k.clamp(1, n);
    let mut all: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        all.swap(i, j);
    }
    let mut picked = all[..k].to_vec();
    picked.sort_unstable();
    picked
}

pub(crate) fn build_tree<T: Real>(
    rows: &[Vec<T>],
    labels: &[bool],
    n_features: usize,
    params: TreeParams,
    idx: &mut [usize],
    pool: &mut FeaturePool<'_>,
) -> TreeNode<T> {
    let mut b = Builder { rows, labels, params, n_features, scratch: Vec::with_capacity(idx.len()) };
    b.build(idx, 0, pool)
}

/// Fits a CART tree on every row and feature of `train`. The seed is unused
/// when all features are considered and is kept for signature parity with
/// the forest.
pub fn fit_tree<T: Real>(train: &Dataset<T>, params: TreeParams, _seed: u64) -> Result<DecisionTree<T>, LearnerError> {
    if train.is_empty() {
        return Err(LearnerError::Empty);
    }
    let mut idx: Vec<usize> = (0..train.len()).collect();
    let root = build_tree(&train.rows, &train.labels, train.n_features(), params, &mut idx, &mut FeaturePool::All);
    Ok(DecisionTree { feature_names: train.feature_names.clone(), params, root })
}

/// Positive-class fraction of the leaf reached by `row`.
pub fn predict_score<T: Real>(tree: &DecisionTree<T>, row: &[T]) -> Result<T, LearnerError> {
    tree.predict_score(row)
}
