use serde::{Deserialize, Serialize};

use super::DataMatrix;
use crate::error::{Error, Result};

/// Column scales below this are treated as zero variance and replaced by 1.
const ZERO_VARIANCE: f64 = 1e-12;

/// Per-column centering and scaling, `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerParams {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl StandardizerParams {
    pub fn identity(d: usize) -> Self {
        StandardizerParams { means: vec![0.0; d], scales: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (row[j] - self.means[j]) / self.scales[j];
        }
    }

    pub fn inverse_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter().zip(self.means.iter().zip(&self.scales)).map(|(z, (m, s))| z * s + m).collect()
    }
}

/// Column means and population standard deviations.
pub fn fit_standardizer(data: &DataMatrix) -> Result<StandardizerParams> {
    let n = data.n_rows();
    if n < 2 {
        return Err(Error::insufficient(format!("standardizer needs at least 2 rows, got {n}")));
    }
    let d = data.n_features();
    let mut means = vec![0.0; d];
    for row in data.rows() {
        for (m, x) in means.iter_mut().zip(row) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut ss = vec![0.0; d];
    for row in data.rows() {
        for j in 0..d {
            let dev = row[j] - means[j];
            ss[j] += dev * dev;
        }
    }
    let scales = ss
        .into_iter()
        .map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > ZERO_VARIANCE {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Ok(StandardizerParams { means, scales })
}

pub fn apply_standardizer(params: &StandardizerParams, data: &DataMatrix) -> Result<DataMatrix> {
    let d = data.n_features();
    if d != params.dim() {
        return Err(Error::DimensionMismatch { expected: params.dim(), got: d });
    }
    let mut values = vec![0.0; data.n_rows() * d];
    for (row, out) in data.rows().zip(values.chunks_exact_mut(d)) {
        params.transform_row(row, out);
    }
    data.with_values(values)
}
