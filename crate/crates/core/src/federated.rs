//! Simulated federated averaging over selected collaborators, producing a
//! model personalized to the initiating participant.
//!
//! Collaborators are chosen from privatized shares only; the chosen clients
//! then train on their own raw rows and exchange nothing but parameters.

use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::data::{audit, train_test_split, DataMatrix, StandardizerParams};
use crate::error::{Error, Result};
use crate::eval::{median, quantile, DEFAULT_TEST_FRACTION};
use crate::models::{mlp_train_local_traced, EncodedData, ModelParams, TrainConfig};
use crate::num17;
use crate::par::parallel_map;
use crate::pipeline::Pipeline;
use crate::rng::derive_seed;
use crate::sandbox::{select_collaborators, AggregatedStore, SimilarityMode};

pub const DEFAULT_ROUNDS: usize = 20;
pub const DEFAULT_LOCAL_EPOCHS: usize = 5;
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Weighting {
    Uniform,
    #[default]
    BySampleCount,
}

impl FromStr for Weighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Weighting::Uniform),
            "by-sample-count" => Ok(Weighting::BySampleCount),
            other => Err(Error::invalid(format!("unknown weighting {other:?} (expected uniform|by-sample-count)"))),
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Uniform => "uniform",
            Weighting::BySampleCount => "by-sample-count",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub clients: Vec<String>,
    /// Learning rate, batch size, L2 and the base seed; `epochs` is ignored.
    pub train_cfg: TrainConfig,
    pub weighting: Weighting,
    /// Per-client seed overrides; other clients derive theirs from
    /// `train_cfg.seed` and their id.
    pub client_seeds: BTreeMap<String, u64>,
    /// Public input scaling shared by all clients.
    pub input_scaling: Option<StandardizerParams>,
    pub jobs: usize,
}

impl FedConfig {
    pub fn new(clients: Vec<String>) -> Self {
        FedConfig {
            rounds: DEFAULT_ROUNDS,
            local_epochs: DEFAULT_LOCAL_EPOCHS,
            clients,
            train_cfg: TrainConfig::mlp_default(),
            weighting: Weighting::default(),
            client_seeds: BTreeMap::new(),
            input_scaling: None,
            jobs: 1,
        }
    }

    pub fn client_seed(&self, id: &str) -> u64 {
        self.client_seeds.get(id).copied().unwrap_or_else(|| derive_seed(self.train_cfg.seed, id))
    }

    fn validate(&self) -> Result<()> {
        if self.clients.is_empty() {
            return Err(Error::invalid("federation needs at least one client"));
        }
        if self.rounds == 0 || self.local_epochs == 0 {
            return Err(Error::invalid("rounds and local_epochs must be at least 1"));
        }
        let mut ids = self.clients.clone();
        ids.sort();
        ids.dedup();
        if ids.len() != self.clients.len() {
            return Err(Error::invalid("client list contains duplicates"));
        }
        self.train_cfg.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    /// Mean batch loss of each client's last local epoch, in client order.
    pub per_client_loss: Vec<f64>,
    pub global_eval_accuracy: f64,
}

/// Coordinate-wise weighted mean. Coordinates on which every client agrees
/// are copied unchanged, so averaging equal vectors is exact.
pub fn weighted_average(vectors: &[&[f64]], weights: &[f64]) -> Result<Vec<f64>> {
    let first = vectors.first().ok_or_else(|| Error::invalid("nothing to average"))?;
    if vectors.len() != weights.len() || vectors.iter().any(|v| v.len() != first.len()) {
        return Err(Error::invalid("parameter vectors differ in length"));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid("averaging weights must be non-negative with a positive sum"));
    }
    Ok((0..first.len())
        .map(|j| {
            let v0 = first[j];
            if vectors.iter().all(|v| v[j].to_bits() == v0.to_bits()) {
                v0
            } else {
                vectors.iter().zip(weights).map(|(v, w)| w * v[j]).sum::<f64>() / total
            }
        })
        .collect())
}

/// Sorted union of labels across the given matrices.
fn class_union<'a>(parts: impl Iterator<Item = &'a DataMatrix>) -> Result<Vec<String>> {
    let mut classes = Vec::new();
    for p in parts {
        classes.extend_from_slice(p.require_labels()?);
    }
    classes.sort();
    classes.dedup();
    Ok(classes)
}

fn eval_accuracy(params: &ModelParams, data: &EncodedData) -> f64 {
    if data.n() == 0 {
        return 0.0;
    }
    let hits = (0..data.n())
        .filter(|&i| {
            let p = params.predict_row(data.row(i));
            let mut best = 0;
            for c in 1..p.len() {
                if p[c] > p[best] {
                    best = c;
                }
            }
            best == data.y[i]
        })
        .count();
    hits as f64 / data.n() as f64
}

/// FedAvg: each round broadcasts the global parameters, every client runs
/// `local_epochs` of local SGD, and the server averages the results.
///
/// Client `id` in round `r` trains with its own seed and epoch offset
/// `r · local_epochs`, so a single client reproduces one uninterrupted local
/// run of `rounds · local_epochs` epochs.
pub fn fedavg_run(
    init: &ModelParams,
    client_data: &BTreeMap<String, DataMatrix>,
    cfg: &FedConfig,
    eval_data: &DataMatrix,
) -> Result<(ModelParams, Vec<RoundReport>)> {
    cfg.validate()?;
    let clients: Vec<&DataMatrix> = cfg
        .clients
        .iter()
        .map(|id| client_data.get(id).ok_or_else(|| Error::UnknownParticipant(id.clone())))
        .collect::<Result<_>>()?;
    for c in &clients {
        if c.n_features() != init.n_inputs() {
            return Err(Error::DimensionMismatch { expected: init.n_inputs(), got: c.n_features() });
        }
    }
    if eval_data.n_features() != init.n_inputs() {
        return Err(Error::DimensionMismatch { expected: init.n_inputs(), got: eval_data.n_features() });
    }
    let classes = class_union(clients.iter().copied().chain(std::iter::once(eval_data)))?;
    if classes.len() != init.n_outputs() {
        return Err(Error::DimensionMismatch { expected: init.n_outputs(), got: classes.len() });
    }
    let scaling = cfg.input_scaling.as_ref();
    let encoded: Vec<EncodedData> =
        clients.iter().map(|c| EncodedData::new(c, &classes, scaling)).collect::<Result<_>>()?;
    if encoded.iter().any(|e| e.n() == 0) {
        return Err(Error::EmptyDataset);
    }
    let eval = EncodedData::new(eval_data, &classes, scaling)?;
    let weights: Vec<f64> = encoded
        .iter()
        .map(|e| match cfg.weighting {
            Weighting::Uniform => 1.0,
            Weighting::BySampleCount => e.n() as f64,
        })
        .collect();
    let seeds: Vec<u64> = cfg.clients.iter().map(|id| cfg.client_seed(id)).collect();
    let slots: Vec<usize> = (0..encoded.len()).collect();

    let mut global = init.clone();
    let mut reports = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let local = TrainConfig {
            epochs: cfg.local_epochs,
            epoch_offset: cfg.train_cfg.epoch_offset + (round * cfg.local_epochs) as u64,
            ..cfg.train_cfg.clone()
        };
        let updates = parallel_map(&slots, cfg.jobs, |&i| {
            mlp_train_local_traced(&global, &encoded[i], &TrainConfig { seed: seeds[i], ..local.clone() })
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let vectors: Vec<&[f64]> = updates.iter().map(|(p, _)| p.weights.as_slice()).collect();
        global = ModelParams::new(global.shape.clone(), weighted_average(&vectors, &weights)?)?;
        reports.push(RoundReport {
            round,
            per_client_loss: updates.iter().map(|(_, t)| *t.last().expect("local_epochs >= 1")).collect(),
            global_eval_accuracy: eval_accuracy(&global, &eval),
        });
    }
    Ok((global, reports))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizedConfig {
    /// Template for the federation; its client list is replaced.
    pub fed: FedConfig,
    pub hidden: Vec<usize>,
    pub init_seed: u64,
    pub test_fraction: f64,
    pub split_seed: u64,
    /// Let the initiator's own training rows join as a client.
    pub include_initiator: bool,
}

impl PersonalizedConfig {
    pub fn new(seed: u64) -> Self {
        let mut fed = FedConfig::new(Vec::new());
        fed.train_cfg.seed = seed;
        PersonalizedConfig {
            fed,
            hidden: vec![DEFAULT_HIDDEN],
            init_seed: seed,
            test_fraction: DEFAULT_TEST_FRACTION,
            split_seed: seed,
            include_initiator: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizedResult {
    pub collaborators: Vec<String>,
    pub params: ModelParams,
    pub reports: Vec<RoundReport>,
    /// Accuracy on the initiator's held-out rows after the last round.
    pub accuracy: f64,
    /// Share of the most frequent class among the held-out rows.
    pub majority_baseline: f64,
}

/// Select `m` collaborators from the privatized store, then run FedAvg over
/// their raw local data and score on the initiator's held-out rows.
pub fn personalized_training(
    store: &AggregatedStore,
    initiator: &str,
    raw_market_data: &BTreeMap<String, DataMatrix>,
    m: usize,
    mode: SimilarityMode,
    cfg: &PersonalizedConfig,
) -> Result<PersonalizedResult> {
    let collaborators = audit::deny_raw_access(|| select_collaborators(store, initiator, m, mode))?;
    let own = raw_market_data.get(initiator).ok_or_else(|| Error::UnknownParticipant(initiator.to_owned()))?;
    let split = train_test_split(own.n_rows(), Some(own.require_labels()?), cfg.test_fraction, cfg.split_seed)?;
    let held_out = own.select(&split.test);

    let mut clients: BTreeMap<String, DataMatrix> = BTreeMap::new();
    for id in &collaborators {
        let data = raw_market_data.get(id).ok_or_else(|| Error::UnknownParticipant(id.clone()))?;
        clients.insert(id.clone(), data.clone());
    }
    let mut fed = cfg.fed.clone();
    fed.clients = collaborators.clone();
    if cfg.include_initiator {
        clients.insert(initiator.to_owned(), own.select(&split.train));
        fed.clients.insert(0, initiator.to_owned());
    }

    let classes = class_union(clients.values().chain(std::iter::once(&held_out)))?;
    let mut shape = vec![own.n_features()];
    shape.extend_from_slice(&cfg.hidden);
    shape.push(classes.len());
    let init = ModelParams::init(shape, cfg.init_seed)?;
    let (params, reports) = fedavg_run(&init, &clients, &fed, &held_out)?;

    let truth = held_out.require_labels()?;
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in truth {
        *counts.entry(l).or_default() += 1;
    }
    let majority = counts.values().copied().max().unwrap_or(0) as f64 / truth.len().max(1) as f64;
    let accuracy = reports.last().map_or(0.0, |r| r.global_eval_accuracy);
    Ok(PersonalizedResult { collaborators, params, reports, accuracy, majority_baseline: majority })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlSweepConfig {
    pub initiator: String,
    pub m: usize,
    pub mode: SimilarityMode,
    pub personalized: PersonalizedConfig,
    /// Seed of the noise draws; fixed across ε so only the magnitude varies.
    pub noise_seed: u64,
}

/// Raw market rows keyed by participant id.
pub fn market_data(pipeline: &Pipeline) -> BTreeMap<String, DataMatrix> {
    pipeline.markets.iter().map(|m| (m.id.clone(), m.data.clone())).collect()
}

/// Personalized accuracy at every ε: rebuild the shares, reselect
/// collaborators and retrain from the same initialization.
pub fn accuracy_vs_epsilon_fl(pipeline: &Pipeline, epsilons: &[f64], cfg: &FlSweepConfig) -> Result<Vec<(f64, f64)>> {
    if epsilons.is_empty() {
        return Err(Error::invalid("epsilon list must be non-empty"));
    }
    let raw = market_data(pipeline);
    let mut fed = cfg.personalized.clone();
    fed.fed.input_scaling = Some(pipeline.model.standardizer().clone());
    epsilons
        .iter()
        .map(|&eps| {
            let store = pipeline.store(&pipeline.privatize(eps, cfg.noise_seed)?)?;
            let r = personalized_training(&store, &cfg.initiator, &raw, cfg.m, cfg.mode, &fed)?;
            Ok((eps, r.accuracy))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlRow {
    pub epsilon: f64,
    pub seed: u64,
    pub accuracy: f64,
}

pub fn fl_rows_csv(rows: &[FlRow]) -> String {
    let mut out = String::from("epsilon,seed,accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.epsilon, r.seed, num17::format(r.accuracy));
    }
    out
}

/// Gnuplot-ready `epsilon median q25 q75`, one line per ε in first-seen order.
pub fn fl_median_table(rows: &[FlRow]) -> String {
    let mut eps: Vec<f64> = Vec::new();
    for r in rows {
        if !eps.contains(&r.epsilon) {
            eps.push(r.epsilon);
        }
    }
    let mut out = String::from("# epsilon median q25 q75\n");
    for e in eps {
        let v: Vec<f64> = rows.iter().filter(|r| r.epsilon == e).map(|r| r.accuracy).collect();
        let _ = writeln!(
            out,
            "{e} {} {} {}",
            num17::format(median(&v)),
            num17::format(quantile(&v, 0.25)),
            num17::format(quantile(&v, 0.75))
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSchema;
    use crate::models::mlp_train_local;

    fn toy(offset: f64, n: usize) -> DataMatrix {
        let schema = FeatureSchema::new(["x", "y"], Some("c")).unwrap();
        let mut v = Vec::new();
        let mut l = Vec::new();
        for i in 0..n {
            let t = (i as f64 * 0.7 + offset).sin();
            v.extend([t, 1.0 + t * 0.5]);
            l.push("a".to_string());
            v.extend([t, -1.0 - t * 0.5]);
            l.push("b".to_string());
        }
        DataMatrix::new(schema, v, Some(l)).unwrap()
    }

    #[test]
    fn average_rules() {
        let a = [1.0, 2.0, 0.1];
        let b = [3.0, 2.0, 0.1];
        assert_eq!(weighted_average(&[&a, &b], &[1.0, 3.0]).unwrap(), vec![2.5, 2.0, 0.1]);
        assert!(weighted_average(&[&a, &b[..2]], &[1.0, 1.0]).is_err());
        assert!(weighted_average(&[&a], &[0.0]).is_err());
    }

    #[test]
    fn single_client_matches_local_training() {
        let data = toy(0.0, 30);
        let init = ModelParams::init(vec![2, 4, 2], 9).unwrap();
        let mut cfg = FedConfig::new(vec!["solo".into()]);
        cfg.rounds = 3;
        cfg.local_epochs = 2;
        cfg.client_seeds.insert("solo".into(), 77);
        let clients = BTreeMap::from([("solo".to_string(), data.clone())]);
        let (fed, reports) = fedavg_run(&init, &clients, &cfg, &data).unwrap();
        assert_eq!(reports.len(), 3);

        let enc = EncodedData::new(&data, &["a".into(), "b".into()], None).unwrap();
        let local = mlp_train_local(&init, &enc, &TrainConfig { epochs: 6, seed: 77, ..cfg.train_cfg.clone() }).unwrap();
        assert_eq!(fed.weights, local.weights);
    }

    #[test]
    fn rejects_bad_federations() {
        let data = toy(0.0, 5);
        let init = ModelParams::init(vec![2, 3, 2], 1).unwrap();
        let clients = BTreeMap::from([("a".to_string(), data.clone())]);
        assert!(fedavg_run(&init, &clients, &FedConfig::new(vec![]), &data).is_err());
        assert!(fedavg_run(&init, &clients, &FedConfig::new(vec!["zz".into()]), &data).is_err());
        let wide = ModelParams::init(vec![3, 3, 2], 1).unwrap();
        assert!(matches!(
            fedavg_run(&wide, &clients, &FedConfig::new(vec!["a".into()]), &data),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn parallel_clients_match_sequential() {
        let clients = BTreeMap::from([
            ("a".to_string(), toy(0.0, 10)),
            ("b".to_string(), toy(1.0, 14)),
            ("c".to_string(), toy(2.0, 7)),
        ]);
        let init = ModelParams::init(vec![2, 4, 2], 3).unwrap();
        let mut cfg = FedConfig::new(vec!["a".into(), "b".into(), "c".into()]);
        cfg.rounds = 2;
        let eval = toy(5.0, 5);
        let seq = fedavg_run(&init, &clients, &cfg, &eval).unwrap();
        cfg.jobs = 3;
        assert_eq!(fedavg_run(&init, &clients, &cfg, &eval).unwrap(), seq);
    }

    #[test]
    fn weighting_names() {
        assert_eq!("uniform".parse::<Weighting>().unwrap(), Weighting::Uniform);
        assert_eq!(Weighting::BySampleCount.to_string(), "by-sample-count");
        assert!("x".parse::<Weighting>().is_err());
    }
}
