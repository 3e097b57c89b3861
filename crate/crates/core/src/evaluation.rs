//! Leave-one-participant-out evaluation with nested tuning and
//! FS / TSF / All feature-set comparison.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::learner::{
    balance_training, compute_metrics, fit_forest, fit_tree, gini_importances, roc_auc, select_fs, Dataset,
    DecisionTree, GroupId, ForestParams, LearnerError, MetricsReport, Prediction, TreeParams, DEFAULT_SMOTE_K,
};
use crate::scalar::Real;
use crate::seed::derive_seed;
use crate::stats::{correlation_table_rows, select_tsf, StatsError, DEFAULT_TSF_P_MAX, DEFAULT_TSF_R_MIN};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {needed} participants, found {found}")]
    TooFewGroups { needed: usize, found: usize },
    #[error("training data contains a single class")]
    SingleClass,
    #[error("empty hyperparameter grid")]
    EmptyGrid,
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "FS")]
    Fs,
    #[serde(rename = "TSF")]
    Tsf,
    All,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 3] = [FeatureSet::Fs, FeatureSet::Tsf, FeatureSet::All];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Fs => "FS",
            FeatureSet::Tsf => "TSF",
            FeatureSet::All => "All",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fs" => Ok(FeatureSet::Fs),
            "tsf" => Ok(FeatureSet::Tsf),
            "all" => Ok(FeatureSet::All),
            other => Err(format!("unknown feature set {other:?} (expected fs, tsf or all)")),
        }
    }
}

/// Where feature selection is computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMode {
    /// On each fold's training participants only.
    #[default]
    PerFold,
    /// Once on the full data set, before the folds are split.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub max_depth: Vec<Option<usize>>,
    pub min_samples_leaf: Vec<usize>,
}

impl Default for Grid {
    fn default() -> Self {
        Self { max_depth: vec![Some(2), Some(3), Some(4), Some(5), Some(8), None], min_samples_leaf: vec![1, 5, 10] }
    }
}

impl Grid {
    pub fn single(params: TreeParams) -> Self {
        Self { max_depth: vec![params.max_depth], min_samples_leaf: vec![params.min_samples_leaf] }
    }

    /// Grid points from simplest to most complex: shallower first (unlimited
    /// last), then larger leaves first.
    pub fn points(&self) -> Vec<TreeParams> {
        let mut depths = self.max_depth.clone();
        depths.sort_by_key(|d| d.unwrap_or(usize::MAX));
        depths.dedup();
        let mut leaves = self.min_samples_leaf.clone();
        leaves.sort_unstable_by(|a, b| b.cmp(a));
        leaves.dedup();
        depths.iter().flat_map(|&d| leaves.iter().map(move |&l| TreeParams::new(d, l))).collect()
    }
}

/// How inner-fold predictions are scored during tuning.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningObjective {
    /// Mean of per-fold AUROC over folds that contain both classes.
    MeanFoldAuroc,
    /// AUROC of all inner held-out predictions pooled together. Single-participant
    /// inner folds are often one class, so this is the steadier choice.
    #[default]
    PooledAuroc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub grid: Grid,
    pub smote_k: usize,
    /// Inner tuning folds are merged round-robin beyond this count.
    pub inner_fold_cap: usize,
    pub tsf_p_max: f64,
    pub tsf_r_min: f64,
    pub forest: ForestParams,
    pub selection: SelectionMode,
    pub tuning_objective: TuningObjective,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            grid: Grid::default(),
            smote_k: DEFAULT_SMOTE_K,
            inner_fold_cap: 10,
            tsf_p_max: DEFAULT_TSF_P_MAX,
            tsf_r_min: DEFAULT_TSF_R_MIN,
            forest: ForestParams::default(),
            selection: SelectionMode::PerFold,
            tuning_objective: TuningObjective::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub held_out: String,
    pub train: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// One fold per participant, in sorted participant order.
pub fn plan_lopo<T: Real>(data: &Dataset<T>) -> Result<FoldPlan, EvalError> {
    let ids: Vec<String> = data.participants().into_iter().map(String::from).collect();
    if ids.len() < 2 {
        return Err(EvalError::TooFewGroups { needed: 2, found: ids.len() });
    }
    let folds = ids
        .iter()
        .map(|h| Fold { held_out: h.clone(), train: ids.iter().filter(|p| *p != h).cloned().collect() })
        .collect();
    Ok(FoldPlan { folds })
}

fn balance_or_keep<T: Real>(train: &Dataset<T>, k: usize, seed: u64) -> Result<Dataset<T>, EvalError> {
    match balance_training(train, k, seed) {
        Ok(b) => Ok(b),
        Err(LearnerError::SingleClass) => Err(EvalError::SingleClass),
        Err(LearnerError::TooFewSamples(n)) => {
            log::warn!("minority class has {n} row(s); training without SMOTE");
            Ok(train.clone())
        }
        Err(e) => Err(e.into()),
    }
}

fn scores_of<T: Real>(tree: &DecisionTree<T>, rows: &[Vec<T>]) -> Result<Vec<T>, EvalError> {
    rows.iter().map(|r| tree.predict_score(r).map_err(EvalError::from)).collect()
}

fn tuning_score<T: Real>(folds: &[(Vec<T>, Vec<bool>)], objective: TuningObjective) -> Result<Option<f64>, EvalError> {
    let auc = |scores: &[T], labels: &[bool]| match roc_auc(scores, labels) {
        Ok(a) => Ok(Some(a)),
        Err(LearnerError::SingleClassAuroc) => Ok(None),
        Err(e) => Err(EvalError::from(e)),
    };
    match objective {
        TuningObjective::MeanFoldAuroc => {
            let mut defined = Vec::new();
            for (s, l) in folds {
                defined.extend(auc(s, l)?);
            }
            Ok(crate::scalar::mean(&defined))
        }
        TuningObjective::PooledAuroc => {
            let scores: Vec<T> = folds.iter().flat_map(|f| f.0.iter().copied()).collect();
            let labels: Vec<bool> = folds.iter().flat_map(|f| f.1.iter().copied()).collect();
            auc(&scores, &labels)
        }
    }
}

/// Picks the grid point with the best inner AUROC (see [`TuningObjective`]).
/// Inner folds leave out one training participant
/// each, or a round-robin group when there are more than `inner_fold_cap`.
pub fn tune_hyperparams<T: Real>(train: &Dataset<T>, cfg: &EvalConfig, seed: u64) -> Result<TreeParams, EvalError> {
    let points = cfg.grid.points();
    match points.len() {
        0 => return Err(EvalError::EmptyGrid),
        1 => return Ok(points[0]),
        _ => {}
    }
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(EvalError::SingleClass);
    }
    let ids: Vec<&str> = train.participants().into_iter().collect();
    if ids.len() < 3 {
        return Err(EvalError::TooFewGroups { needed: 3, found: ids.len() });
    }
    let n_inner = ids.len().min(cfg.inner_fold_cap.max(2));
    let fold_of = |p: &str| ids.iter().position(|&q| q == p).expect("known participant") % n_inner;

    let deepest = if points.iter().any(|p| p.max_depth.is_none()) {
        None
    } else {
        points.iter().filter_map(|p| p.max_depth).max()
    };
    let mut leaves: Vec<usize> = points.iter().map(|p| p.min_samples_leaf).collect();
    leaves.sort_unstable();
    leaves.dedup();

    // per_fold[point] holds (scores, labels) of each inner held-out fold
    let mut per_fold: Vec<Vec<(Vec<T>, Vec<bool>)>> = vec![Vec::new(); points.len()];
    for f in 0..n_inner {
        let inner_train = train.filter_participants(|p| fold_of(p) != f);
        let inner_test = train.filter_participants(|p| fold_of(p) == f);
        if inner_test.is_empty() {
            continue;
        }
        let balanced = match balance_or_keep(&inner_train, cfg.smote_k, derive_seed(seed, f as u64)) {
            Ok(b) => b,
            Err(EvalError::SingleClass) => {
                log::debug!("inner fold {f} trains on one class; skipped");
                continue;
            }
            Err(e) => return Err(e),
        };
        for &leaf in &leaves {
            // greedy growth makes a depth-limited tree a truncation of the full one
            let full = fit_tree(&balanced, TreeParams::new(deepest, leaf), 0)?;
            for (i, p) in points.iter().enumerate().filter(|(_, p)| p.min_samples_leaf == leaf) {
                let tree = full.truncated(p.max_depth);
                per_fold[i].push((scores_of(&tree, &inner_test.rows)?, inner_test.labels.clone()));
            }
        }
    }
    let mut best: Option<(f64, TreeParams)> = None;
    for (p, folds) in points.iter().zip(&per_fold) {
        let Some(auc) = tuning_score(folds, cfg.tuning_objective)? else { continue };
        if best.is_none_or(|(b, _)| auc > b) {
            best = Some((auc, *p));
        }
    }
    Ok(best.map_or(points[0], |(_, p)| p))
}

/// Features chosen by `set` using `train` only.
pub fn select_features<T: Real>(
    set: FeatureSet,
    train: &Dataset<T>,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Selection, EvalError> {
    match set {
        FeatureSet::All => Ok(Selection { features: train.feature_names.clone(), fallback: false }),
        FeatureSet::Tsf => {
            let table = correlation_table_rows(&train.feature_names, &train.rows, &train.labels)?;
            match select_tsf(&table, T::of(cfg.tsf_p_max), T::of(cfg.tsf_r_min)) {
                Ok(features) => Ok(Selection { features, fallback: false }),
                Err(StatsError::EmptySelection) => {
                    let top = table.iter().find(|c| !c.constant).unwrap_or(&table[0]);
                    log::warn!("no feature passes the TSF rule; using the strongest, {}", top.feature);
                    Ok(Selection { features: vec![top.feature.clone()], fallback: true })
                }
                Err(e) => Err(e.into()),
            }
        }
        FeatureSet::Fs => {
            let forest = fit_forest(train, cfg.forest, seed)?;
            let fs = select_fs(&gini_importances(&forest, train)?)?;
            Ok(Selection { features: fs.features, fallback: fs.fallback })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub features: Vec<String>,
    /// The selection rule kept nothing and a fallback was used.
    pub fallback: bool,
}

/// Everything a fold trained, serialisable for audit and hashing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FoldModel<T: Real> {
    pub held_out: String,
    pub feature_set: FeatureSet,
    pub seed: u64,
    pub selection: Selection,
    pub params: TreeParams,
    pub n_train: usize,
    pub n_train_balanced: usize,
    pub tree: DecisionTree<T>,
}

impl<T: Real> FoldModel<T> {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fold model serializes")
    }
}

/// Trains one fold on `train` only. `preselected` bypasses per-fold selection.
pub fn train_fold<T: Real>(
    held_out: &str,
    train: &Dataset<T>,
    set: FeatureSet,
    preselected: Option<&Selection>,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<FoldModel<T>, EvalError> {
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(EvalError::SingleClass);
    }
    let selection = match preselected {
        Some(s) => s.clone(),
        None => select_features(set, train, cfg, derive_seed(seed, 1))?,
    };
    let restricted = train.select_features(&selection.features)?;
    let params = tune_hyperparams(&restricted, cfg, derive_seed(seed, 2))?;
    let balanced = balance_or_keep(&restricted, cfg.smote_k, derive_seed(seed, 3))?;
    let tree = fit_tree(&balanced, params, derive_seed(seed, 4))?;
    Ok(FoldModel {
        held_out: held_out.to_string(),
        feature_set: set,
        seed,
        selection,
        params,
        n_train: restricted.len(),
        n_train_balanced: balanced.len(),
        tree,
    })
}

/// A held-out prediction tagged with its source row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PredictionRecord<T: Real> {
    pub fold: usize,
    pub participant_id: String,
    /// Index into the evaluated data set.
    pub row: usize,
    pub score: T,
    pub predicted: bool,
    pub actual: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub held_out: String,
    pub seed: u64,
    pub features: Vec<String>,
    pub selection_fallback: bool,
    pub params: TreeParams,
    pub n_train: usize,
    pub n_train_balanced: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeatureSetReport<T: Real> {
    pub feature_set: FeatureSet,
    pub metrics: MetricsReport,
    pub folds: Vec<FoldSummary>,
    pub predictions: Vec<PredictionRecord<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EvalReport<T: Real> {
    pub seed: u64,
    pub config: EvalConfig,
    pub rows: Vec<FeatureSetReport<T>>,
}

/// Seed of fold `index` of feature set `set` under master `seed`.
pub fn fold_seed(seed: u64, set: FeatureSet, index: usize) -> u64 {
    derive_seed(derive_seed(seed, set as u64), index as u64)
}

/// Trains fold `index` of the LOPO plan, holding out `held_out`. The
/// held-out participant's rows are removed before anything is computed.
pub fn fit_lopo_fold<T: Real>(
    data: &Dataset<T>,
    held_out: &str,
    index: usize,
    set: FeatureSet,
    preselected: Option<&Selection>,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<FoldModel<T>, EvalError> {
    let train = data.filter_participants(|p| p != held_out);
    train_fold(held_out, &train, set, preselected, cfg, fold_seed(seed, set, index))
}

/// Runs LOPO for one feature set and pools the held-out predictions.
pub fn run_lopo<T: Real>(
    data: &Dataset<T>,
    set: FeatureSet,
    cfg: &EvalConfig,
    seed: u64,
) -> Result<FeatureSetReport<T>, EvalError> {
    let plan = plan_lopo(data)?;
    let global = match cfg.selection {
        SelectionMode::PerFold => None,
        SelectionMode::Global => Some(select_features(set, data, cfg, derive_seed(derive_seed(seed, set as u64), u64::MAX))?),
    };
    let results: Vec<(FoldSummary, Vec<PredictionRecord<T>>)> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let model = fit_lopo_fold(data, &fold.held_out, i, set, global.as_ref(), cfg, seed)?;
            let cols: Vec<usize> =
                model.selection.features.iter().map(|n| data.column_index(n)).collect::<Result<_, _>>()?;
            let mut preds = Vec::new();
            for (row, g) in data.groups.iter().enumerate() {
                if !matches!(g, GroupId::Participant(p) if *p == fold.held_out) {
                    continue;
                }
                let x: Vec<T> = cols.iter().map(|&j| data.rows[row][j]).collect();
                let p = Prediction::from_score(model.tree.predict_score(&x)?, data.labels[row]);
                preds.push(PredictionRecord {
                    fold: i,
                    participant_id: fold.held_out.clone(),
                    row,
                    score: p.score,
                    predicted: p.predicted,
                    actual: p.actual,
                });
            }
            let summary = FoldSummary {
                held_out: fold.held_out.clone(),
                seed: model.seed,
                features: model.selection.features,
                selection_fallback: model.selection.fallback,
                params: model.params,
                n_train: model.n_train,
                n_train_balanced: model.n_train_balanced,
                n_test: preds.len(),
            };
            Ok((summary, preds))
        })
        .collect::<Result<_, EvalError>>()?;
    let mut folds = Vec::with_capacity(results.len());
    let mut predictions = Vec::new();
    for (s, p) in results {
        folds.push(s);
        predictions.extend(p);
    }
    let pooled: Vec<Prediction<T>> =
        predictions.iter().map(|p| Prediction { score: p.score, predicted: p.predicted, actual: p.actual }).collect();
    let metrics = compute_metrics(&pooled)?;
    Ok(FeatureSetReport { feature_set: set, metrics, folds, predictions })
}

/// Runs `run_lopo` for each requested set. Each set's result depends only
/// on the master seed, not on which other sets were requested.
pub fn compare_feature_sets<T: Real>(
    data: &Dataset<T>,
    sets: &[FeatureSet],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<EvalReport<T>, EvalError> {
    let rows = sets.iter().map(|&s| run_lopo(data, s, cfg, seed)).collect::<Result<_, _>>()?;
    Ok(EvalReport { seed, config: cfg.clone(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use rand::Rng;

    /// Two informative columns plus noise; `n_p` participants with mixed labels.
    fn fixture(n_p: usize, days: usize, signal: f64, seed: u64) -> Dataset<f64> {
        let mut rng = rng_from(seed);
        let names = (0..5).map(|j| format!("f{j}")).collect();
        let mut ds = Dataset::new(names);
        for p in 0..n_p {
            for d in 0..days {
                let label = (d + p) % 3 == 0;
                let shift = if label { signal } else { 0.0 };
                let row = vec![
                    rng.random::<f64>() + shift,
                    rng.random::<f64>() - shift,
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                    rng.random::<f64>(),
                ];
                ds.push(row, label, GroupId::Participant(format!("P{p:02}"))).unwrap();
            }
        }
        ds
    }

    fn fast_cfg() -> EvalConfig {
        EvalConfig { forest: ForestParams { n_trees: 20, ..ForestParams::default() }, ..EvalConfig::default() }
    }

    #[test]
    fn lopo_plan_shape() {
        let d = fixture(4, 3, 0.0, 0);
        let plan = plan_lopo(&d).unwrap();
        assert_eq!(plan.folds.len(), 4);
        for f in &plan.folds {
            assert!(!f.train.contains(&f.held_out));
            assert_eq!(f.train.len(), 3);
        }
        let mut rev = d.clone();
        rev.rows.reverse();
        rev.labels.reverse();
        rev.groups.reverse();
        assert_eq!(plan_lopo(&rev).unwrap(), plan);
        let one = d.filter_participants(|p| p == "P00");
        assert!(matches!(plan_lopo(&one), Err(EvalError::TooFewGroups { .. })));
    }

    #[test]
    fn grid_order_prefers_simple() {
        let pts = Grid::default().points();
        assert_eq!(pts.len(), 18);
        assert_eq!(pts[0], TreeParams::new(Some(2), 10));
        assert_eq!(pts[17], TreeParams::new(None, 1));
    }

    #[test]
    fn single_point_grid_skips_cv() {
        let d = fixture(2, 3, 0.0, 1);
        let cfg = EvalConfig { grid: Grid::single(TreeParams::new(Some(7), 3)), ..fast_cfg() };
        assert_eq!(tune_hyperparams(&d, &cfg, 0).unwrap(), TreeParams::new(Some(7), 3));
    }

    #[test]
    fn separable_prefers_shallow() {
        let d = fixture(6, 12, 5.0, 2);
        let cfg = fast_cfg();
        let p = tune_hyperparams(&d, &cfg, 3).unwrap();
        assert!(p.max_depth.is_some_and(|m| m <= 2), "{p:?}");
        assert_eq!(p, tune_hyperparams(&d, &cfg, 3).unwrap());
    }

    #[test]
    fn predictions_cover_every_row_once() {
        let d = fixture(5, 9, 0.6, 4);
        let r = run_lopo(&d, FeatureSet::Tsf, &fast_cfg(), 5).unwrap();
        let mut rows: Vec<usize> = r.predictions.iter().map(|p| p.row).collect();
        rows.sort_unstable();
        assert_eq!(rows, (0..d.len()).collect::<Vec<_>>());
        assert_eq!(r.metrics.confusion.total(), d.len());
        assert!(r.metrics.auroc.unwrap() > 0.7);
    }

    #[test]
    fn comparison_is_deterministic() {
        let d = fixture(4, 9, 0.5, 6);
        let a = compare_feature_sets(&d, &FeatureSet::ALL, &fast_cfg(), 1).unwrap();
        let b = compare_feature_sets(&d, &FeatureSet::ALL, &fast_cfg(), 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3);
        let only = compare_feature_sets(&d, &[FeatureSet::Fs], &fast_cfg(), 1).unwrap();
        assert_eq!(only.rows[0], a.rows[0]);
    }

    #[test]
    fn held_out_rows_do_not_touch_training() {
        let d = fixture(5, 9, 0.5, 7);
        let cfg = fast_cfg();
        for set in FeatureSet::ALL {
            let train = d.filter_participants(|p| p != "P02");
            let a = train_fold("P02", &train, set, None, &cfg, 9).unwrap();
            let mut mutated = d.clone();
            for (r, g) in mutated.rows.iter_mut().zip(&mutated.groups) {
                if *g == GroupId::Participant("P02".into()) {
                    r.iter_mut().for_each(|v| *v = 100.0 - *v);
                }
            }
            let train2 = mutated.filter_participants(|p| p != "P02");
            let b = train_fold("P02", &train2, set, None, &cfg, 9).unwrap();
            assert_eq!(a.to_json(), b.to_json());
        }
    }

    #[test]
    fn feature_set_parsing() {
        assert_eq!("TSF".parse::<FeatureSet>().unwrap(), FeatureSet::Tsf);
        assert_eq!("all".parse::<FeatureSet>().unwrap(), FeatureSet::All);
        assert!("best".parse::<FeatureSet>().is_err());
    }
}
