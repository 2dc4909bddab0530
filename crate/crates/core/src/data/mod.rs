//! Tabular data: schema, dense matrices, CSV ingestion, standardization,
//! market partitioning and synthetic generators.

pub mod audit;
mod csv_io;
mod partition;
mod standardize;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use csv_io::{load_csv, load_csv_any, write_csv};
pub use partition::{partition_indices, partition_markets, train_test_split, PartitionSpec, Split};
pub use standardize::{apply_standardizer, fit_standardizer, StandardizerParams};
pub use synthetic::{
    crop_schema, generate_synthetic_crop, generate_synthetic_market, market_schema, CROP_PROFILES,
};

/// Ordered column identifiers for a table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    feature_names: Vec<String>,
    label_name: Option<String>,
}

impl FeatureSchema {
    pub fn new<S: Into<String>>(
        feature_names: impl IntoIterator<Item = S>,
        label_name: Option<&str>,
    ) -> Result<Self> {
        let feature_names: Vec<String> = feature_names.into_iter().map(Into::into).collect();
        if feature_names.is_empty() {
            return Err(Error::Schema("at least one feature column is required".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for name in &feature_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name {name:?}")));
            }
        }
        if let Some(label) = label_name {
            if seen.contains(label) {
                return Err(Error::Schema(format!("label {label:?} is also a feature")));
            }
        }
        Ok(FeatureSchema { feature_names, label_name: label_name.map(str::to_owned) })
    }

    /// Schema with generic names `pc1..pck` and no label.
    pub fn components(k: usize) -> Self {
        FeatureSchema { feature_names: (1..=k).map(|i| format!("pc{i}")).collect(), label_name: None }
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn label_name(&self) -> Option<&str> {
        self.label_name.as_deref()
    }

    pub fn feature_count(&self) -> usize {
        self.feature_names.len()
    }

    pub fn with_label(&self, label: Option<&str>) -> Result<Self> {
        FeatureSchema::new(self.feature_names.clone(), label)
    }
}

/// Dense row-major table of finite values with an optional categorical label column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    schema: FeatureSchema,
    n: usize,
    values: Vec<f64>,
    labels: Option<Vec<String>>,
    owner: Option<String>,
}

impl DataMatrix {
    pub fn new(schema: FeatureSchema, values: Vec<f64>, labels: Option<Vec<String>>) -> Result<Self> {
        let d = schema.feature_count();
        if values.len() % d != 0 {
            return Err(Error::DimensionMismatch { expected: d, got: values.len() % d });
        }
        let n = values.len() / d;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { row: i / d, column: i % d });
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: l.len() });
            }
            if schema.label_name().is_none() {
                return Err(Error::Schema("labels given but schema has no label column".into()));
            }
        }
        Ok(DataMatrix { schema, n, values, labels, owner: None })
    }

    pub fn from_rows(schema: FeatureSchema, rows: &[Vec<f64>], labels: Option<Vec<String>>) -> Result<Self> {
        let d = schema.feature_count();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
        Self::new(schema, rows.concat(), labels)
    }

    /// Unlabeled matrix with generic column names.
    pub fn unlabeled(d: usize, values: Vec<f64>) -> Result<Self> {
        let schema = FeatureSchema::new((1..=d).map(|j| format!("x{j}")), None)?;
        Self::new(schema, values, None)
    }

    /// Mark this matrix as the raw private data of `owner`; reads are then audited.
    pub fn into_private(mut self, owner: impl Into<String>) -> Self {
        self.owner = Some(owner.into());
        self
    }

    pub fn owner(&self) -> Option<&str> {
        self.owner.as_deref()
    }

    fn touch(&self) {
        if let Some(owner) = &self.owner {
            audit::record_raw_read(owner);
        }
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.schema.feature_count()
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn values(&self) -> &[f64] {
        self.touch();
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.touch();
        let d = self.n_features();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.touch();
        self.values.chunks_exact(self.n_features())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn require_labels(&self) -> Result<&[String]> {
        self.labels().ok_or_else(|| Error::invalid("labeled data required"))
    }

    /// Rows at `indices`, in that order. Ownership tag is kept.
    pub fn select(&self, indices: &[usize]) -> DataMatrix {
        let d = self.n_features();
        let mut values = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        let labels = self.labels.as_ref().map(|l| indices.iter().map(|&i| l[i].clone()).collect());
        DataMatrix { schema: self.schema.clone(), n: indices.len(), values, labels, owner: self.owner.clone() }
    }

    /// Same rows with values replaced; shape must match.
    pub fn with_values(&self, values: Vec<f64>) -> Result<DataMatrix> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch { expected: self.values.len(), got: values.len() });
        }
        let mut out = DataMatrix::new(self.schema.clone(), values, self.labels.clone())?;
        out.owner = self.owner.clone();
        Ok(out)
    }

    pub fn with_labels(&self, labels: Vec<String>, label_name: &str) -> Result<DataMatrix> {
        let schema = self.schema.with_label(Some(label_name))?;
        let mut out = DataMatrix::new(schema, self.values.clone(), Some(labels))?;
        out.owner = self.owner.clone();
        Ok(out)
    }

    /// Row-wise concatenation. All parts must share the schema; the owner tag is dropped.
    pub fn concat(parts: &[&DataMatrix]) -> Result<DataMatrix> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let mut values = Vec::new();
        let mut labels = first.labels.as_ref().map(|_| Vec::new());
        for p in parts {
            if p.schema != first.schema {
                return Err(Error::Schema("cannot concatenate matrices with different schemas".into()));
            }
            values.extend_from_slice(p.values());
            match (&mut labels, &p.labels) {
                (Some(acc), Some(l)) => acc.extend(l.iter().cloned()),
                (None, None) => {}
                _ => return Err(Error::Schema("mixed labeled and unlabeled parts".into())),
            }
        }
        DataMatrix::new(first.schema.clone(), values, labels)
    }

    /// Distinct labels in sorted order.
    pub fn classes(&self) -> Result<Vec<String>> {
        let mut c: Vec<String> = self.require_labels()?.to_vec();
        c.sort();
        c.dedup();
        Ok(c)
    }
}
