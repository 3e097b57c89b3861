//! Synthetic minority oversampling.
//!
//! Each synthetic row is `x + u·(x_nn − x)` where `x` is a uniformly drawn
//! minority row, `x_nn` one of its `k` nearest minority neighbours
//! (Euclidean) and `u ~ U[0, 1)`.

use rand::Rng;

use super::{Dataset, GroupId, LearnerError};
use crate::scalar::Real;
use crate::seed::rng_from;

pub const DEFAULT_SMOTE_K: usize = 5;

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other rows of each row; ties go to the lower index.
fn neighbours<T: Real>(rows: &[Vec<T>], k: usize) -> Vec<Vec<usize>> {
    (0..rows.len())
        .map(|i| {
            let mut d: Vec<(T, usize)> =
                (0..rows.len()).filter(|&j| j != i).map(|j| (sq_dist(&rows[i], &rows[j]), j)).collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite distance").then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Draws `n_synthetic` interpolated rows from `minority`.
pub fn smote_oversample<T: Real>(
    minority: &[Vec<T>],
    k: usize,
    n_synthetic: usize,
    seed: u64,
) -> Result<Vec<Vec<T>>, LearnerError> {
    if k == 0 {
        return Err(LearnerError::InvalidParameter("SMOTE k must be ≥ 1".into()));
    }
    if minority.len() < 2 {
        return Err(LearnerError::TooFewSamples(minority.len()));
    }
    if n_synthetic == 0 {
        return Ok(Vec::new());
    }
    let k = k.min(minority.len() - 1);
    let nn = neighbours(minority, k);
    let mut rng = rng_from(seed);
    let mut out = Vec::with_capacity(n_synthetic);
    for _ in 0..n_synthetic {
        let i = rng.random_range(0..minority.len());
        let j = nn[i][rng.random_range(0..k)];
        let u = T::of(rng.random::<f64>());
        let (x, y) = (&minority[i], &minority[j]);
        out.push(x.iter().zip(y).map(|(&a, &b)| a + u * (b - a)).collect());
    }
    Ok(out)
}

/// Appends SMOTE rows to the minority class until both classes have equal
/// counts. Synthetic rows carry [`GroupId::Synthetic`].
pub fn balance_training<T: Real>(train: &Dataset<T>, k: usize, seed: u64) -> Result<Dataset<T>, LearnerError> {
    let (neg, pos) = train.class_counts();
    if neg == 0 || pos == 0 {
        return Err(LearnerError::SingleClass);
    }
    if neg == pos {
        return Ok(train.clone());
    }
    let minority_label = pos < neg;
    let minority: Vec<Vec<T>> = train
        .rows
        .iter()
        .zip(&train.labels)
        .filter(|(_, &l)| l == minority_label)
        .map(|(r, _)| r.clone())
        .collect();
    let synthetic = smote_oversample(&minority, k, neg.max(pos) - neg.min(pos), seed)?;
    let mut out = train.clone();
    for row in synthetic {
        out.rows.push(row);
        out.labels.push(minority_label);
        out.groups.push(GroupId::Synthetic);
    }
    Ok(out)
}
