//! The researcher's global PCA model and participant-side projection.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{apply_standardizer, fit_standardizer, DataMatrix, StandardizerParams};
use crate::error::{Error, Result};
use crate::hash::Fnv64;
use crate::ldp::{self, SensitivityVector};
use crate::linalg::{dot, symmetric_eigen};
use crate::num17;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Standardizer + top-k principal directions of the standardized data.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    standardizer: StandardizerParams,
    /// k × d, rows are orthonormal principal directions.
    components: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    sensitivities: SensitivityVector,
    /// Trace of the standardized training covariance.
    total_variance: f64,
    fingerprint: u64,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn d(&self) -> usize {
        self.standardizer.dim()
    }

    pub fn standardizer(&self) -> &StandardizerParams {
        &self.standardizer
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn sensitivities(&self) -> &SensitivityVector {
        &self.sensitivities
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Replace the published sensitivities (e.g. with ones estimated from a
    /// different public reference set).
    pub fn with_sensitivities(mut self, s: SensitivityVector) -> Result<Self> {
        if s.len() != self.k() {
            return Err(Error::DimensionMismatch { expected: self.k(), got: s.len() });
        }
        self.sensitivities = s;
        Ok(self)
    }

    /// Project one raw feature row.
    pub fn project_row(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.d() {
            return Err(Error::DimensionMismatch { expected: self.d(), got: row.len() });
        }
        let mut z = vec![0.0; self.d()];
        self.standardizer.transform_row(row, &mut z);
        Ok(self.components.iter().map(|c| dot(c, &z)).collect())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// 64-bit hash of the little-endian bytes of (d, k, means, scales, components).
pub fn model_fingerprint(standardizer: &StandardizerParams, components: &[Vec<f64>]) -> u64 {
    let mut h = Fnv64::new();
    h.write(&(standardizer.dim() as u64).to_le_bytes());
    h.write(&(components.len() as u64).to_le_bytes());
    h.write_f64s(&standardizer.means);
    h.write_f64s(&standardizer.scales);
    for c in components {
        h.write_f64s(c);
    }
    h.finish()
}

/// Participant data projected into component space (Oᵢ).
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMatrix {
    k: usize,
    values: Vec<f64>,
    model_fingerprint: u64,
}

impl TransformedMatrix {
    pub fn new(k: usize, values: Vec<f64>, model_fingerprint: u64) -> Result<Self> {
        if k == 0 || values.len() % k != 0 {
            return Err(Error::DimensionMismatch { expected: k, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("transformed matrix contains non-finite values"));
        }
        Ok(TransformedMatrix { k, values, model_fingerprint })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.k)
    }

    pub fn model_fingerprint(&self) -> u64 {
        self.model_fingerprint
    }

    pub fn select(&self, indices: &[usize]) -> TransformedMatrix {
        let values = indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        TransformedMatrix { k: self.k, values, model_fingerprint: self.model_fingerprint }
    }

    pub fn concat(parts: &[&TransformedMatrix]) -> Result<TransformedMatrix> {
        let first = parts.first().ok_or(Error::EmptyDataset)?;
        let mut values = Vec::new();
        for p in parts {
            if p.model_fingerprint != first.model_fingerprint {
                return Err(Error::FingerprintMismatch { expected: first.model_fingerprint, got: p.model_fingerprint });
            }
            values.extend_from_slice(&p.values);
        }
        Ok(TransformedMatrix { k: first.k, values, model_fingerprint: first.model_fingerprint })
    }

    pub fn to_csv_string(&self) -> String {
        let meta = serde_json::json!({ "fingerprint": format_fingerprint(self.model_fingerprint), "k": self.k });
        component_csv::write(&meta, self.k, &self.values)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            fingerprint: String,
            k: usize,
        }
        let (meta, values) = component_csv::read::<Meta>(text, |m| m.k)?;
        TransformedMatrix::new(meta.k, values, parse_fingerprint(&meta.fingerprint)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// View as an unlabeled [`DataMatrix`] with columns `pc1..pck`.
    pub fn to_data_matrix(&self) -> DataMatrix {
        DataMatrix::new(crate::data::FeatureSchema::components(self.k), self.values.clone(), None)
            .expect("finite by construction")
    }
}

/// Covariance (1/(n−1)) of standardized rows.
fn covariance(z: &DataMatrix) -> Vec<Vec<f64>> {
    let d = z.n_features();
    let n = z.n_rows();
    let mut means = vec![0.0; d];
    for row in z.rows() {
        for j in 0..d {
            means[j] += row[j];
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![vec![0.0; d]; d];
    for row in z.rows() {
        for i in 0..d {
            let di = row[i] - means[i];
            for j in 0..=i {
                cov[i][j] += di * (row[j] - means[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            cov[i][j] /= (n - 1) as f64;
            cov[j][i] = cov[i][j];
        }
    }
    cov
}

/// Flip `v` so that its largest-magnitude entry (first one on ties) is positive.
fn canonical_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Fit the global model on `data` keeping `k` components. Sensitivities are
/// estimated from the same (public) data.
pub fn pca_fit(data: &DataMatrix, k: usize) -> Result<PcaModel> {
    let d = data.n_features();
    if k == 0 || k > d {
        return Err(Error::invalid(format!("k must be in 1..={d}, got {k}")));
    }
    if data.n_rows() < 2 {
        return Err(Error::insufficient("PCA needs at least 2 rows"));
    }
    let standardizer = fit_standardizer(data)?;
    let z = apply_standardizer(&standardizer, data)?;
    let cov = covariance(&z);
    let total_variance = (0..d).map(|i| cov[i][i]).sum();
    let eig = symmetric_eigen(&cov)?;
    let mut components: Vec<Vec<f64>> = eig.vectors.into_iter().take(k).collect();
    for c in &mut components {
        let norm = dot(c, c).sqrt();
        c.iter_mut().for_each(|x| *x /= norm);
        canonical_sign(c);
    }
    let eigenvalues = eig.values.into_iter().take(k).collect();
    let fingerprint = model_fingerprint(&standardizer, &components);
    let mut model = PcaModel {
        standardizer,
        components,
        eigenvalues,
        sensitivities: SensitivityVector::floor(k),
        total_variance,
        fingerprint,
    };
    model.sensitivities = ldp::compute_sensitivity(&model, data)?;
    Ok(model)
}

/// Project raw rows: standardize, then multiply by the component matrix transposed.
pub fn pca_transform(model: &PcaModel, data: &DataMatrix) -> Result<TransformedMatrix> {
    if data.n_features() != model.d() {
        return Err(Error::DimensionMismatch { expected: model.d(), got: data.n_features() });
    }
    let k = model.k();
    let mut values = Vec::with_capacity(data.n_rows() * k);
    let mut z = vec![0.0; model.d()];
    for row in data.rows() {
        model.standardizer.transform_row(row, &mut z);
        values.extend(model.components.iter().map(|c| dot(c, &z)));
    }
    TransformedMatrix::new(k, values, model.fingerprint)
}

/// Component eigenvalues as fractions of the total standardized variance.
pub fn explained_variance_ratio(model: &PcaModel) -> Vec<f64> {
    if model.total_variance <= 0.0 {
        return vec![0.0; model.k()];
    }
    model.eigenvalues.iter().map(|&l| (l.max(0.0) / model.total_variance).clamp(0.0, 1.0)).collect()
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    version: u32,
    k: usize,
    d: usize,
    #[serde(serialize_with = "num17::vec")]
    means: Vec<f64>,
    #[serde(serialize_with = "num17::vec")]
    scales: Vec<f64>,
    #[serde(serialize_with = "num17::matrix")]
    components: Vec<Vec<f64>>,
    #[serde(serialize_with = "num17::vec")]
    eigenvalues: Vec<f64>,
    #[serde(serialize_with = "num17::vec")]
    sensitivities: Vec<f64>,
    #[serde(serialize_with = "num17::f64")]
    total_variance: f64,
    fingerprint: String,
}

impl From<&PcaModel> for ModelDoc {
    fn from(m: &PcaModel) -> Self {
        ModelDoc {
            version: MODEL_FORMAT_VERSION,
            k: m.k(),
            d: m.d(),
            means: m.standardizer.means.clone(),
            scales: m.standardizer.scales.clone(),
            components: m.components.clone(),
            eigenvalues: m.eigenvalues.clone(),
            sensitivities: m.sensitivities.values().to_vec(),
            total_variance: m.total_variance,
            fingerprint: format_fingerprint(m.fingerprint),
        }
    }
}

impl TryFrom<ModelDoc> for PcaModel {
    type Error = Error;

    fn try_from(doc: ModelDoc) -> Result<Self> {
        if doc.version != MODEL_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model version {}", doc.version)));
        }
        let shape_ok = doc.means.len() == doc.d
            && doc.scales.len() == doc.d
            && doc.components.len() == doc.k
            && doc.components.iter().all(|c| c.len() == doc.d)
            && doc.eigenvalues.len() == doc.k
            && doc.sensitivities.len() == doc.k;
        if !shape_ok || doc.k == 0 {
            return Err(Error::Format("model document has inconsistent dimensions".into()));
        }
        if doc.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Format("non-positive scale in model document".into()));
        }
        let standardizer = StandardizerParams { means: doc.means, scales: doc.scales };
        let fingerprint = model_fingerprint(&standardizer, &doc.components);
        let stated = parse_fingerprint(&doc.fingerprint)?;
        if stated != fingerprint {
            return Err(Error::FingerprintMismatch { expected: stated, got: fingerprint });
        }
        Ok(PcaModel {
            standardizer,
            components: doc.components,
            eigenvalues: doc.eigenvalues,
            sensitivities: SensitivityVector::new(doc.sensitivities)?,
            total_variance: doc.total_variance,
            fingerprint,
        })
    }
}

/// Component-space matrices on disk: a `# {json}` metadata line, a
/// `pc1,...,pck` header, then one row per line in 17 significant digits.
pub(crate) mod component_csv {
    use std::fmt::Write as _;

    use serde::de::DeserializeOwned;

    use crate::error::{Error, Result};

    pub fn write(meta: &serde_json::Value, k: usize, values: &[f64]) -> String {
        let mut out = String::new();
        writeln!(out, "# {meta}").unwrap();
        let names: Vec<String> = (1..=k).map(|i| format!("pc{i}")).collect();
        writeln!(out, "{}", names.join(",")).unwrap();
        for row in values.chunks_exact(k) {
            let cells: Vec<String> = row.iter().map(|v| crate::num17::format(*v)).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }

    pub fn read<M: DeserializeOwned>(text: &str, k_of: impl Fn(&M) -> usize) -> Result<(M, Vec<f64>)> {
        let mut lines = text.lines();
        let meta = lines
            .next()
            .and_then(|l| l.strip_prefix('#'))
            .ok_or_else(|| Error::Format("component CSV must start with a '# {json}' line".into()))?;
        let meta: M = serde_json::from_str(meta.trim())?;
        let k = k_of(&meta);
        let header = lines.next().ok_or_else(|| Error::Format("missing column header".into()))?;
        if header.split(',').count() != k {
            return Err(Error::Format(format!("header has {} columns, metadata says k={k}", header.split(',').count())));
        }
        let mut values = Vec::new();
        for (r, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != k {
                return Err(Error::Format(format!("row {} has {} cells, expected {k}", r + 1, cells.len())));
            }
            for (c, cell) in cells.iter().enumerate() {
                values.push(cell.trim().parse().map_err(|_| Error::Parse {
                    row: r + 1,
                    column: format!("pc{}", c + 1),
                    value: cell.to_string(),
                })?);
            }
        }
        Ok((meta, values))
    }
}

pub fn format_fingerprint(fp: u64) -> String {
    format!("{fp:016x}")
}

pub fn parse_fingerprint(s: &str) -> Result<u64> {
    u64::from_str_radix(s.trim_start_matches("0x"), 16)
        .map_err(|_| Error::Format(format!("bad fingerprint {s:?}")))
}
