//! Feature–label correlation analysis and top-significant-feature selection.

pub mod special;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{feature_names, LabeledDay};
use crate::scalar::Real;
use special::student_t_two_tailed;

pub const DEFAULT_TSF_P_MAX: f64 = 0.05;
pub const DEFAULT_TSF_R_MIN: f64 = 0.20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("series lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 3 observations, got {0}")]
    TooFewSamples(usize),
    #[error("series has zero variance")]
    ConstantInput,
    #[error("|r| = 1: p-value degenerates to 0")]
    DegenerateR,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("no feature passed the selection rule")]
    EmptySelection,
}

/// Product-moment correlation of two equally long series.
pub fn pearson_r<T: Real>(x: &[T], y: &[T]) -> Result<T, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(StatsError::TooFewSamples(n));
    }
    let nf = T::of_usize(n);
    let mx = x.iter().copied().sum::<T>() / nf;
    let my = y.iter().copied().sum::<T>() / nf;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() || syy == T::zero() {
        return Err(StatsError::ConstantInput);
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// Two-tailed p-value of a correlation `r` over `n` pairs via Student's t
/// with n − 2 degrees of freedom.
pub fn p_value_two_tailed<T: Real>(r: T, n: usize) -> Result<T, StatsError> {
    if n < 3 {
        return Err(StatsError::TooFewSamples(n));
    }
    if r.abs() >= T::one() {
        return Err(StatsError::DegenerateR);
    }
    let df = T::of_usize(n - 2);
    let t = r * (df / (T::one() - r * r)).sqrt();
    Ok(student_t_two_tailed(t, df))
}

/// One row of the correlation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FeatureCorrelation<T: Real> {
    pub feature: String,
    pub r: T,
    pub p: T,
    pub depressive_mean: T,
    pub depressive_sd: T,
    pub nondepressive_mean: T,
    pub nondepressive_sd: T,
    /// Zero-variance feature, reported with r = 0 and p = 1.
    pub constant: bool,
}

/// Mean and sample (n − 1) standard deviation.
fn mean_sd<T: Real>(xs: &[T]) -> (T, T) {
    let Some(m) = crate::scalar::mean(xs) else {
        return (T::nan(), T::nan());
    };
    if xs.len() < 2 {
        return (m, T::zero());
    }
    let ss = xs.iter().map(|&x| (x - m) * (x - m)).sum::<T>();
    (m, (ss / T::of_usize(xs.len() - 1)).sqrt())
}

fn by_abs_r_then_name<T: Real>(a: &FeatureCorrelation<T>, b: &FeatureCorrelation<T>) -> Ordering {
    b.r.abs().partial_cmp(&a.r.abs()).unwrap_or(Ordering::Equal).then_with(|| a.feature.cmp(&b.feature))
}

/// Correlates every column of `rows` with the 0/1 label, sorted by |r| descending.
pub fn correlation_table_rows<T: Real, R: AsRef<[T]>>(
    names: &[String],
    rows: &[R],
    labels: &[bool],
) -> Result<Vec<FeatureCorrelation<T>>, StatsError> {
    if rows.len() != labels.len() {
        return Err(StatsError::LengthMismatch(rows.len(), labels.len()));
    }
    if rows.len() < 3 {
        return Err(StatsError::TooFewSamples(rows.len()));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(StatsError::SingleClass);
    }
    let y: Vec<T> = labels.iter().map(|&l| if l { T::one() } else { T::zero() }).collect();
    let mut out = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let col: Vec<T> = rows.iter().map(|r| r.as_ref()[j]).collect();
        let (pos, neg): (Vec<_>, Vec<_>) = col.iter().zip(labels).partition(|(_, &l)| l);
        let pos: Vec<T> = pos.into_iter().map(|(&v, _)| v).collect();
        let neg: Vec<T> = neg.into_iter().map(|(&v, _)| v).collect();
        let (dm, dsd) = mean_sd(&pos);
        let (nm, nsd) = mean_sd(&neg);
        let (r, p, constant) = match pearson_r(&col, &y) {
            Ok(r) => {
                let p = match p_value_two_tailed(r, col.len()) {
                    Ok(p) => p,
                    Err(StatsError::DegenerateR) => T::zero(),
                    Err(e) => return Err(e),
                };
                (r, p, false)
            }
            Err(StatsError::ConstantInput) => (T::zero(), T::one(), true),
            Err(e) => return Err(e),
        };
        out.push(FeatureCorrelation {
            feature: name.clone(),
            r,
            p,
            depressive_mean: dm,
            depressive_sd: dsd,
            nondepressive_mean: nm,
            nondepressive_sd: nsd,
            constant,
        });
    }
    out.sort_by(by_abs_r_then_name);
    Ok(out)
}

/// Correlation table over labeled participant-days, all 48 features.
pub fn correlation_table<T: Real>(days: &[LabeledDay<T>]) -> Result<Vec<FeatureCorrelation<T>>, StatsError> {
    let rows: Vec<&[T]> = days.iter().map(|d| d.features.values.as_slice()).collect();
    let labels: Vec<bool> = days.iter().map(|d| d.label).collect();
    correlation_table_rows(feature_names(), &rows, &labels)
}

/// Features with p < `p_max` and |r| ≥ `r_min`, in |r|-descending order.
pub fn select_tsf<T: Real>(
    table: &[FeatureCorrelation<T>],
    p_max: T,
    r_min: T,
) -> Result<Vec<String>, StatsError> {
    let mut kept: Vec<&FeatureCorrelation<T>> =
        table.iter().filter(|c| !c.constant && c.p < p_max && c.r.abs() >= r_min).collect();
    if kept.is_empty() {
        return Err(StatsError::EmptySelection);
    }
    kept.sort_by(|a, b| by_abs_r_then_name(a, b));
    Ok(kept.into_iter().map(|c| c.feature.clone()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_examples() {
        assert!((pearson_r(&[1.0f64, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_r(&[1.0f64, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        // sxy = 3, sxx = 2, syy = 14/3
        let r = pearson_r(&[1.0f64, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.981_98).abs() < 1e-5);
        assert!((r - 3.0 / (2.0f64 * 14.0 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn pearson_errors() {
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]), Err(StatsError::ConstantInput));
        assert_eq!(pearson_r(&[1.0, 2.0, 3.0], &[1.0, 2.0]), Err(StatsError::LengthMismatch(3, 2)));
        assert_eq!(pearson_r(&[1.0, 2.0], &[1.0, 2.0]), Err(StatsError::TooFewSamples(2)));
    }

    #[test]
    fn p_values() {
        assert!((p_value_two_tailed(0.0, 30).unwrap() - 1.0f64).abs() < 1e-12);
        assert!(p_value_two_tailed(0.34f64, 528).unwrap() < 1e-10);
        // frozen from numerical integration of the t density (df = 8)
        assert!((p_value_two_tailed(0.5f64, 10).unwrap() - 0.141_113_281_25).abs() < 5e-4);
        assert_eq!(p_value_two_tailed(1.0f64, 10), Err(StatsError::DegenerateR));
    }

    fn row(name: &str, r: f64, p: f64) -> FeatureCorrelation<f64> {
        FeatureCorrelation {
            feature: name.into(),
            r,
            p,
            depressive_mean: 0.0,
            depressive_sd: 0.0,
            nondepressive_mean: 0.0,
            nondepressive_sd: 0.0,
            constant: false,
        }
    }

    #[test]
    fn tsf_rule() {
        // rows rounded to two decimals, as in a report table
        let rounded = [
            ("pirRightstd_morning", 0.34, 0.00),
            ("pirRightmean_morning", 0.27, 0.00),
            ("pirRightmedian_morning", 0.27, 0.00),
            ("pirRightmax_morning", 0.25, 0.00),
            ("pirLeftmean_morning", -0.25, 0.00),
            ("pirLeftmedian_morning", -0.24, 0.00),
            ("pirRightsum_evening", 0.24, 0.00),
            ("pirLeftsum_evening", 0.23, 0.00),
            ("pirLeftmin_morning", -0.21, 0.01),
        ];
        let table: Vec<_> = rounded.iter().map(|&(n, r, p)| row(n, r, p)).collect();
        assert_eq!(select_tsf(&table, 0.05, 0.20).unwrap().len(), 9);

        assert_eq!(select_tsf(&[row("a", 0.19, 0.01)], 0.05, 0.20), Err(StatsError::EmptySelection));
        assert_eq!(select_tsf(&[row("a", -0.25, 0.001)], 0.05, 0.20).unwrap(), vec!["a".to_string()]);
    }

    #[test]
    fn tsf_ignores_row_order() {
        let mut t = vec![row("a", 0.3, 0.01), row("b", -0.5, 0.001), row("c", 0.25, 0.02), row("d", 0.1, 0.2)];
        let first = select_tsf(&t, 0.05, 0.2).unwrap();
        t.reverse();
        assert_eq!(select_tsf(&t, 0.05, 0.2).unwrap(), first);
        assert_eq!(first, vec!["b", "a", "c"]);
    }

    #[test]
    fn table_flags_constant_columns() {
        let names = vec!["signal".to_string(), "flat".to_string()];
        let rows = vec![[0.1f64, 1.0], [0.2, 1.0], [0.9, 1.0], [1.0, 1.0]];
        let labels = [false, false, true, true];
        let t = correlation_table_rows(&names, &rows, &labels).unwrap();
        assert_eq!(t[0].feature, "signal");
        let flat = &t[1];
        assert!(flat.constant);
        assert_eq!((flat.r, flat.p), (0.0, 1.0));
        assert!((t[0].depressive_mean - 0.95).abs() < 1e-12);
        assert!(matches!(
            correlation_table_rows(&names, &rows, &[true; 4]),
            Err(StatsError::SingleClass)
        ));
    }
}
