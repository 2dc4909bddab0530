//! Per-component sensitivity, ε allocation and Laplace noise.
//!
//! A participant's projected matrix gets independent Laplace noise in every
//! cell; component `i` uses scale `sᵢ / εᵢ`. With ε split proportionally to
//! sensitivity, every component ends up with the same scale `Σs / ε`.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::pca::{component_csv, format_fingerprint, parse_fingerprint, PcaModel, TransformedMatrix};
use crate::rng::{seeded_stream, SeededRng};

/// Lower bound applied to every sensitivity so Laplace scales stay positive.
pub const SENSITIVITY_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityVector(Vec<f64>);

impl SensitivityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::invalid("sensitivities must be finite and positive"));
        }
        Ok(SensitivityVector(values))
    }

    pub(crate) fn floor(k: usize) -> Self {
        SensitivityVector(vec![SENSITIVITY_FLOOR; k])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Total ε and its per-component split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub per_component: Vec<f64>,
}

impl PrivacyBudget {
    /// Laplace scale for component `i`.
    pub fn scale(&self, s: &SensitivityVector, i: usize) -> f64 {
        s.values()[i] / self.per_component[i]
    }
}

/// Column-wise range of the projected reference set: for a single coordinate
/// the largest |f(x) − f(x′)| over reference pairs is exactly max − min.
pub fn compute_sensitivity(model: &PcaModel, reference: &DataMatrix) -> Result<SensitivityVector> {
    if reference.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let t = crate::pca::pca_transform(model, reference)?;
    Ok(sensitivity_of(&t))
}

/// Per-column range of an already-projected matrix, floored.
pub fn sensitivity_of(t: &TransformedMatrix) -> SensitivityVector {
    let mut lo = vec![f64::INFINITY; t.k()];
    let mut hi = vec![f64::NEG_INFINITY; t.k()];
    for row in t.rows() {
        for (j, &v) in row.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }
    SensitivityVector(lo.iter().zip(&hi).map(|(l, h)| (h - l).max(SENSITIVITY_FLOOR)).collect())
}

/// Split `total` across components proportionally to their sensitivity.
pub fn allocate_epsilon(total: f64, s: &SensitivityVector) -> Result<PrivacyBudget> {
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::invalid(format!("epsilon must be positive and finite, got {total}")));
    }
    let sum = s.total();
    Ok(PrivacyBudget { epsilon: total, per_component: s.values().iter().map(|v| total * v / sum).collect() })
}

/// Inverse-CDF Laplace(0, scale) draw for `u ∈ (−0.5, 0.5)`.
pub fn laplace_from_uniform(scale: f64, u: f64) -> f64 {
    -scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// One Laplace(0, scale) sample.
pub fn laplace_sample(scale: f64, rng: &mut SeededRng) -> f64 {
    loop {
        let u = rng.random::<f64>() - 0.5;
        // u = -0.5 would map to an infinite draw
        if u > -0.5 {
            return laplace_from_uniform(scale, u);
        }
    }
}

/// Privatized projection (Cᵢ), the only data a participant releases.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyMatrix {
    k: usize,
    values: Vec<f64>,
    epsilon: f64,
    model_fingerprint: u64,
}

impl NoisyMatrix {
    pub fn new(k: usize, values: Vec<f64>, epsilon: f64, model_fingerprint: u64) -> Result<Self> {
        if k == 0 || values.len() % k != 0 {
            return Err(Error::DimensionMismatch { expected: k, got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("noisy matrix contains non-finite values"));
        }
        if !(epsilon > 0.0) {
            return Err(Error::invalid("epsilon must be positive"));
        }
        Ok(NoisyMatrix { k, values, epsilon, model_fingerprint })
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

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn model_fingerprint(&self) -> u64 {
        self.model_fingerprint
    }

    pub fn select(&self, indices: &[usize]) -> NoisyMatrix {
        let values = indices.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        NoisyMatrix { values, ..self.clone() }
    }

    pub fn to_csv_string(&self) -> String {
        let meta = serde_json::json!({
            "epsilon": self.epsilon,
            "fingerprint": format_fingerprint(self.model_fingerprint),
            "k": self.k,
        });
        component_csv::write(&meta, self.k, &self.values)
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Meta {
            epsilon: f64,
            fingerprint: String,
            k: usize,
        }
        let (meta, values) = component_csv::read::<Meta>(text, |m| m.k)?;
        NoisyMatrix::new(meta.k, values, meta.epsilon, parse_fingerprint(&meta.fingerprint)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_csv_str(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

fn check_budget(t: &TransformedMatrix, s: &SensitivityVector, budget: &PrivacyBudget) -> Result<()> {
    if s.len() != t.k() {
        return Err(Error::DimensionMismatch { expected: t.k(), got: s.len() });
    }
    if budget.per_component.len() != t.k() {
        return Err(Error::DimensionMismatch { expected: t.k(), got: budget.per_component.len() });
    }
    let sum: f64 = budget.per_component.iter().sum();
    let total = s.total();
    let consistent = (sum - budget.epsilon).abs() <= 1e-9 * budget.epsilon
        && s.values()
            .iter()
            .zip(&budget.per_component)
            .all(|(si, ei)| (ei * total - budget.epsilon * si).abs() <= 1e-9 * budget.epsilon * total);
    if !consistent {
        return Err(Error::invalid("privacy budget does not match the sensitivity allocation"));
    }
    Ok(())
}

/// Add fresh Laplace(0, sᵢ/εᵢ) noise to every cell of `transformed`.
pub fn privatize(
    transformed: &TransformedMatrix,
    s: &SensitivityVector,
    budget: &PrivacyBudget,
    rng: &mut SeededRng,
) -> Result<NoisyMatrix> {
    check_budget(transformed, s, budget)?;
    let k = transformed.k();
    let scales: Vec<f64> = (0..k).map(|i| budget.scale(s, i)).collect();
    let mut values = transformed.values().to_vec();
    for row in values.chunks_exact_mut(k) {
        for (v, &b) in row.iter_mut().zip(&scales) {
            *v += laplace_sample(b, rng);
        }
    }
    NoisyMatrix::new(k, values, budget.epsilon, transformed.model_fingerprint())
}

/// Participant-side convenience: check the model, allocate `epsilon` from the
/// model's published sensitivities and privatize with a seeded stream.
pub fn privatize_with_model(model: &PcaModel, transformed: &TransformedMatrix, epsilon: f64, seed: u64) -> Result<NoisyMatrix> {
    if transformed.model_fingerprint() != model.fingerprint() {
        return Err(Error::FingerprintMismatch { expected: model.fingerprint(), got: transformed.model_fingerprint() });
    }
    let budget = allocate_epsilon(epsilon, model.sensitivities())?;
    privatize(transformed, model.sensitivities(), &budget, &mut seeded_stream(seed, 0))
}

/// Same as [`privatize`], splitting rows into blocks of `block_rows`; block
/// `b` draws from stream `b` of `seed`, so the result does not depend on how
/// many threads process the blocks.
pub fn privatize_blocks(
    transformed: &TransformedMatrix,
    s: &SensitivityVector,
    budget: &PrivacyBudget,
    seed: u64,
    block_rows: usize,
    threads: usize,
) -> Result<NoisyMatrix> {
    check_budget(transformed, s, budget)?;
    if block_rows == 0 {
        return Err(Error::invalid("block_rows must be positive"));
    }
    let k = transformed.k();
    let scales: Vec<f64> = (0..k).map(|i| budget.scale(s, i)).collect();
    let mut values = transformed.values().to_vec();
    let blocks: Vec<(usize, &mut [f64])> = values.chunks_mut(block_rows * k).enumerate().collect();
    let per_thread = blocks.len().div_ceil(threads.max(1)).max(1);
    let mut blocks = blocks;
    std::thread::scope(|scope| {
        while !blocks.is_empty() {
            let take = per_thread.min(blocks.len());
            let chunk: Vec<(usize, &mut [f64])> = blocks.drain(..take).collect();
            let scales = &scales;
            scope.spawn(move || {
                for (b, block) in chunk {
                    let mut rng = seeded_stream(seed, b as u64);
                    for row in block.chunks_exact_mut(k) {
                        for (v, &sc) in row.iter_mut().zip(scales) {
                            *v += laplace_sample(sc, &mut rng);
                        }
                    }
                }
            });
        }
    });
    NoisyMatrix::new(k, values, budget.epsilon, transformed.model_fingerprint())
}
