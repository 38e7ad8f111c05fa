//! Tabular datasets with binary labels and categorical protected attributes.

mod csv_io;
mod synthetic;
mod transform;

use std::collections::BTreeMap;

pub use csv_io::{load_csv, read_vector, write_csv, write_vector, Schema};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use transform::{split, standardize, Standardizer};

use crate::error::{Error, Result};

/// One protected attribute: its name and the categorical value of every record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtectedAttr {
    pub name: String,
    pub values: Vec<String>,
}

impl ProtectedAttr {
    pub fn new(name: impl Into<String>, values: Vec<String>) -> Self {
        Self {
            name: name.into(),
            values,
        }
    }
}

/// Immutable table of feature rows, binary labels and protected attributes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>, // row-major, n_records * n_features
    n_features: usize,
    feature_names: Vec<String>,
    labels: Vec<u8>,
    label_name: String,
    protected: Vec<ProtectedAttr>,
    weights: Option<Vec<f64>>,
    sensitive: Vec<String>,
    privileged: BTreeMap<String, String>,
}

impl Dataset {
    pub fn new(
        rows: Vec<Vec<f64>>,
        feature_names: Vec<String>,
        labels: Vec<u8>,
        protected: Vec<ProtectedAttr>,
    ) -> Result<Self> {
        let n_features = feature_names.len();
        let mut features = Vec::with_capacity(rows.len() * n_features);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::InvalidRecord {
                    row: i + 1,
                    message: format!("expected {} features, found {}", n_features, row.len()),
                });
            }
            features.extend_from_slice(row);
        }
        Self::from_flat(features, feature_names, labels, protected)
    }

    pub(crate) fn from_flat(
        features: Vec<f64>,
        feature_names: Vec<String>,
        labels: Vec<u8>,
        protected: Vec<ProtectedAttr>,
    ) -> Result<Self> {
        let n = labels.len();
        let n_features = feature_names.len();
        if features.len() != n * n_features {
            return Err(Error::DimensionMismatch {
                what: "feature matrix entries",
                expected: n * n_features,
                actual: features.len(),
            });
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidRecord {
                row: i + 1,
                message: format!("label {} is not 0 or 1", labels[i]),
            });
        }
        if let Some(k) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord {
                row: k / n_features.max(1) + 1,
                message: format!("feature {} is not finite", feature_names[k % n_features]),
            });
        }
        for attr in &protected {
            if attr.values.len() != n {
                return Err(Error::Validation(format!(
                    "protected attribute {} has {} values for {} records",
                    attr.name,
                    attr.values.len(),
                    n
                )));
            }
        }
        Ok(Self {
            features,
            n_features,
            feature_names,
            labels,
            label_name: "label".to_string(),
            protected,
            weights: None,
            sensitive: Vec::new(),
            privileged: BTreeMap::new(),
        })
    }

    /// Attaches per-record weights; each must be finite and strictly positive.
    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n_records() {
            return Err(Error::DimensionMismatch {
                what: "record weights",
                expected: self.n_records(),
                actual: weights.len(),
            });
        }
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidRecord {
                row: i + 1,
                message: format!("weight {} must be finite and positive", weights[i]),
            });
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn without_weights(mut self) -> Self {
        self.weights = None;
        self
    }

    /// Flags feature columns that encode a sensitive attribute directly.
    pub fn with_sensitive_features(mut self, names: Vec<String>) -> Result<Self> {
        for name in &names {
            if !self.feature_names.contains(name) {
                return Err(Error::Schema(format!(
                    "sensitive feature {name} is not a feature column"
                )));
            }
        }
        self.sensitive = names;
        Ok(self)
    }

    /// Designates the privileged value of a protected attribute.
    pub fn with_privileged(mut self, attr: &str, value: &str) -> Result<Self> {
        if self.protected_values(attr).is_none() {
            return Err(Error::Schema(format!(
                "privileged designation names unknown protected attribute {attr}"
            )));
        }
        self.privileged.insert(attr.to_string(), value.to_string());
        Ok(self)
    }

    pub fn with_label_name(mut self, name: impl Into<String>) -> Self {
        self.label_name = name.into();
        self
    }

    pub fn n_records(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n_records()).map(move |i| self.row(i))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn protected(&self) -> &[ProtectedAttr] {
        &self.protected
    }

    pub fn protected_values(&self, attr: &str) -> Option<&[String]> {
        self.protected
            .iter()
            .find(|a| a.name == attr)
            .map(|a| a.values.as_slice())
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Weight of record `i`, 1.0 when the dataset is unweighted.
    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    pub fn sensitive_features(&self) -> &[String] {
        &self.sensitive
    }

    pub fn privileged(&self) -> &BTreeMap<String, String> {
        &self.privileged
    }

    /// Indices of feature columns not flagged as sensitive.
    pub fn non_sensitive_columns(&self) -> Vec<usize> {
        (0..self.n_features)
            .filter(|&j| !self.sensitive.contains(&self.feature_names[j]))
            .collect()
    }

    /// The records at `indices`, in the given order, with all metadata.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            n_features: self.n_features,
            feature_names: self.feature_names.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            label_name: self.label_name.clone(),
            protected: self
                .protected
                .iter()
                .map(|a| ProtectedAttr {
                    name: a.name.clone(),
                    values: indices.iter().map(|&i| a.values[i].clone()).collect(),
                })
                .collect(),
            weights: self
                .weights
                .as_ref()
                .map(|w| indices.iter().map(|&i| w[i]).collect()),
            sensitive: self.sensitive.clone(),
            privileged: self.privileged.clone(),
        }
    }

    /// Same records with the feature matrix restricted to `columns`.
    pub fn select_features(&self, columns: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(self.n_records() * columns.len());
        for row in self.rows() {
            features.extend(columns.iter().map(|&j| row[j]));
        }
        let feature_names: Vec<String> = columns
            .iter()
            .map(|&j| self.feature_names[j].clone())
            .collect();
        Dataset {
            features,
            n_features: columns.len(),
            sensitive: self
                .sensitive
                .iter()
                .filter(|s| feature_names.contains(s))
                .cloned()
                .collect(),
            feature_names,
            ..self.clone()
        }
    }

    /// Same records with replaced labels.
    pub fn with_labels(&self, labels: Vec<u8>) -> Result<Dataset> {
        if labels.len() != self.n_records() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: self.n_records(),
                actual: labels.len(),
            });
        }
        if let Some(i) = labels.iter().position(|&y| y > 1) {
            return Err(Error::InvalidRecord {
                row: i + 1,
                message: format!("label {} is not 0 or 1", labels[i]),
            });
        }
        Ok(Dataset {
            labels,
            ..self.clone()
        })
    }

    /// Same records with a replaced, row-major feature matrix of equal shape.
    pub(crate) fn with_flat_features(&self, features: Vec<f64>) -> Dataset {
        debug_assert_eq!(features.len(), self.features.len());
        Dataset {
            features,
            ..self.clone()
        }
    }

    pub(crate) fn flat_features(&self) -> &[f64] {
        &self.features
    }
}

/// One cell of a [`GroupIndex`]: the attribute values and member records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Group {
    pub key: Vec<String>,
    pub members: Vec<usize>,
}

impl Group {
    /// Display name, attribute values joined with `|`.
    pub fn label(&self) -> String {
        self.key.join("|")
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Partition of records by the values of one or more protected attributes.
///
/// Groups are ordered lexicographically by value tuple. `weights[g]` is the
/// population share of group `g` (record count over total, ignoring record
/// weights).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupIndex {
    attrs: Vec<String>,
    groups: Vec<Group>,
    weights: Vec<f64>,
    membership: Vec<usize>,
    privileged: Option<usize>,
}

impl GroupIndex {
    pub fn new<S: AsRef<str>>(ds: &Dataset, attrs: &[S]) -> Result<Self> {
        if attrs.is_empty() {
            return Err(Error::Validation(
                "grouping needs at least one protected attribute".into(),
            ));
        }
        let columns = attrs
            .iter()
            .map(|a| {
                ds.protected_values(a.as_ref()).ok_or_else(|| {
                    Error::Schema(format!("unknown protected attribute {}", a.as_ref()))
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut cells: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
        for i in 0..ds.n_records() {
            let key = columns.iter().map(|c| c[i].clone()).collect();
            cells.entry(key).or_default().push(i);
        }
        let n = ds.n_records();
        let mut membership = vec![0; n];
        let groups: Vec<Group> = cells
            .into_iter()
            .enumerate()
            .map(|(g, (key, members))| {
                for &i in &members {
                    membership[i] = g;
                }
                Group { key, members }
            })
            .collect();
        let weights = groups
            .iter()
            .map(|g| g.len() as f64 / n as f64)
            .collect();

        let attrs: Vec<String> = attrs.iter().map(|a| a.as_ref().to_string()).collect();
        let privileged_key: Option<Vec<String>> = attrs
            .iter()
            .map(|a| ds.privileged().get(a).cloned())
            .collect();
        let privileged =
            privileged_key.and_then(|key| groups.iter().position(|g| g.key == key));

        Ok(Self {
            attrs,
            groups,
            weights,
            membership,
            privileged,
        })
    }

    /// Groups by every protected attribute of the dataset.
    pub fn all_attributes(ds: &Dataset) -> Result<Self> {
        let attrs: Vec<&str> = ds.protected().iter().map(|a| a.name.as_str()).collect();
        Self::new(ds, &attrs)
    }

    pub fn attrs(&self) -> &[String] {
        &self.attrs
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_records(&self) -> usize {
        self.membership.len()
    }

    pub fn group_of(&self, record: usize) -> usize {
        self.membership[record]
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn labels(&self) -> Vec<String> {
        self.groups.iter().map(Group::label).collect()
    }

    /// Index of the designated privileged group, if the dataset names one
    /// for every grouping attribute and that group is present.
    pub fn privileged(&self) -> Option<usize> {
        self.privileged
    }

    /// `(unprivileged, privileged)` for a two-group index with a designation.
    pub fn privilege_pair(&self) -> Result<(usize, usize)> {
        self.require_two_groups()?;
        match self.privileged {
            Some(p) => Ok((1 - p, p)),
            None => Err(Error::Validation(format!(
                "no privileged group designated for attribute(s) {}",
                self.attrs.join(", ")
            ))),
        }
    }

    pub fn require_two_groups(&self) -> Result<()> {
        if self.groups.len() == 2 {
            Ok(())
        } else {
            Err(Error::Unsupported(format!(
                "operation needs exactly 2 groups, found {}",
                self.groups.len()
            )))
        }
    }

    pub(crate) fn check_len(&self, what: &'static str, len: usize) -> Result<()> {
        if len == self.n_records() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                what,
                expected: self.n_records(),
                actual: len,
            })
        }
    }
}
