//! End-to-end case-study setup: split a labeled dataset into the
//! researcher's global set and private market shards, fit the global PCA
//! model, project every market and privatize on demand.

use crate::data::{partition_markets, DataMatrix, PartitionSpec};
use crate::error::{Error, Result};
use crate::ldp::{privatize_with_model, NoisyMatrix};
use crate::pca::{pca_fit, pca_transform, PcaModel, TransformedMatrix};
use crate::rng::derive_seed;
use crate::sandbox::{AggregatedStore, ParticipantShare};

pub const DEFAULT_MARKETS: usize = 5;
pub const DEFAULT_GLOBAL_FRACTION: f64 = 1.0 / 3.0;
pub const DEFAULT_K: usize = 2;
pub const DEFAULT_CLUSTERS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub n_markets: usize,
    pub global_fraction: f64,
    pub k: usize,
    pub clusters: usize,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_markets: DEFAULT_MARKETS,
            global_fraction: DEFAULT_GLOBAL_FRACTION,
            k: DEFAULT_K,
            clusters: DEFAULT_CLUSTERS,
            seed: 0,
        }
    }
}

pub fn market_id(i: usize) -> String {
    format!("market_{}", i + 1)
}

/// A participant: its private rows and their projection into the shared
/// component space.
#[derive(Debug, Clone)]
pub struct Market {
    pub id: String,
    pub data: DataMatrix,
    pub transformed: TransformedMatrix,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub config: PipelineConfig,
    pub global: DataMatrix,
    pub global_transformed: TransformedMatrix,
    pub model: PcaModel,
    pub markets: Vec<Market>,
}

impl Pipeline {
    pub fn build(data: &DataMatrix, config: &PipelineConfig) -> Result<Pipeline> {
        let stratify = data.labels().is_some();
        let spec = PartitionSpec::new(config.n_markets, config.global_fraction, config.seed, stratify)?;
        let (global, shards) = partition_markets(data, &spec)?;
        let model = pca_fit(&global, config.k)?;
        let global_transformed = pca_transform(&model, &global)?;
        let markets = shards
            .into_iter()
            .enumerate()
            .map(|(i, shard)| {
                let id = market_id(i);
                let data = shard.into_private(id.clone());
                let transformed = pca_transform(&model, &data)?;
                Ok(Market { id, data, transformed })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Pipeline { config: config.clone(), global, global_transformed, model, markets })
    }

    pub fn market(&self, id: &str) -> Result<&Market> {
        self.markets
            .iter()
            .find(|m| m.id == id)
            .ok_or_else(|| Error::UnknownParticipant(id.to_owned()))
    }

    /// Noise seed of one market for a run seed.
    pub fn noise_seed(seed: u64, market: &str) -> u64 {
        derive_seed(seed, market)
    }

    /// Every market's noisy share at `epsilon`, in market order.
    pub fn privatize(&self, epsilon: f64, seed: u64) -> Result<Vec<NoisyMatrix>> {
        self.markets
            .iter()
            .map(|m| privatize_with_model(&self.model, &m.transformed, epsilon, Self::noise_seed(seed, &m.id)))
            .collect()
    }

    pub fn store(&self, shares: &[NoisyMatrix]) -> Result<AggregatedStore> {
        if shares.len() != self.markets.len() {
            return Err(Error::invalid("one share per market is required"));
        }
        let mut store = AggregatedStore::new(self.model.fingerprint());
        for (m, share) in self.markets.iter().zip(shares) {
            store.submit_share(ParticipantShare::new(m.id.clone(), share.clone())?)?;
        }
        Ok(store)
    }

    /// Clean projections of all markets stacked in market order.
    pub fn clean_pool(&self) -> Result<TransformedMatrix> {
        let parts: Vec<&TransformedMatrix> = self.markets.iter().map(|m| &m.transformed).collect();
        TransformedMatrix::concat(&parts)
    }
}

/// Row-wise concatenation of noisy shares bound to one model.
pub fn concat_noisy(parts: &[NoisyMatrix]) -> Result<NoisyMatrix> {
    let first = parts.first().ok_or(Error::EmptyDataset)?;
    let mut values = Vec::new();
    for p in parts {
        if p.k() != first.k() {
            return Err(Error::DimensionMismatch { expected: first.k(), got: p.k() });
        }
        if p.model_fingerprint() != first.model_fingerprint() {
            return Err(Error::FingerprintMismatch { expected: first.model_fingerprint(), got: p.model_fingerprint() });
        }
        values.extend_from_slice(p.values());
    }
    NoisyMatrix::new(first.k(), values, first.epsilon(), first.model_fingerprint())
}
