use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::features::{feature_names, LabeledDay};
use crate::scalar::Real;

/// Origin of a row: a real participant or a SMOTE synthetic.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GroupId {
    Participant(String),
    Synthetic,
}

/// Rectangular labeled design matrix with a group per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Dataset<T: Real> {
    pub feature_names: Vec<String>,
    pub rows: Vec<Vec<T>>,
    pub labels: Vec<bool>,
    pub groups: Vec<GroupId>,
}

impl<T: Real> Dataset<T> {
    pub fn new(feature_names: Vec<String>) -> Self {
        Self { feature_names, rows: Vec::new(), labels: Vec::new(), groups: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<T>, label: bool, group: GroupId) -> Result<(), LearnerError> {
        if row.len() != self.n_features() {
            return Err(LearnerError::DimensionMismatch { expected: self.n_features(), got: row.len() });
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(LearnerError::InvalidParameter("non-finite feature value".into()));
        }
        self.rows.push(row);
        self.labels.push(label);
        self.groups.push(group);
        Ok(())
    }

    /// Builds a dataset from unnamed rows, one group per row.
    pub fn from_rows(rows: Vec<Vec<T>>, labels: Vec<bool>) -> Result<Self, LearnerError> {
        let d = rows.first().map_or(0, Vec::len);
        let names = (0..d).map(|j| format!("x{j}")).collect();
        let mut ds = Self::new(names);
        for (i, (r, l)) in rows.into_iter().zip(labels).enumerate() {
            ds.push(r, l, GroupId::Participant(format!("row{i}")))?;
        }
        Ok(ds)
    }

    pub fn from_labeled_days(days: &[LabeledDay<T>]) -> Self {
        Self {
            feature_names: feature_names().to_vec(),
            rows: days.iter().map(|d| d.features.values.clone()).collect(),
            labels: days.iter().map(|d| d.label).collect(),
            groups: days.iter().map(|d| GroupId::Participant(d.participant_id.clone())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// (negatives, positives)
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&l| l).count();
        (self.labels.len() - pos, pos)
    }

    pub fn participants(&self) -> BTreeSet<&str> {
        self.groups
            .iter()
            .filter_map(|g| match g {
                GroupId::Participant(p) => Some(p.as_str()),
                GroupId::Synthetic => None,
            })
            .collect()
    }

    pub fn column_index(&self, name: &str) -> Result<usize, LearnerError> {
        self.feature_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| LearnerError::UnknownFeature(name.to_string()))
    }

    /// Restricts the dataset to the named columns, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<Self, LearnerError> {
        let idx: Vec<usize> = names.iter().map(|n| self.column_index(n)).collect::<Result<_, _>>()?;
        Ok(Self {
            feature_names: names.to_vec(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&j| r[j]).collect()).collect(),
            labels: self.labels.clone(),
            groups: self.groups.clone(),
        })
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i].clone()).collect(),
        }
    }

    /// Rows whose group is one of `participants`.
    pub fn filter_participants(&self, keep: impl Fn(&str) -> bool) -> Self {
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| matches!(&self.groups[i], GroupId::Participant(p) if keep(p)))
            .collect();
        self.subset(&idx)
    }
}
