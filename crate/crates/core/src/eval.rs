//! Privacy (membership-inference power) and utility (classifier accuracy on
//! noisy rows) measurements, the centralized-vs-aggregated comparison and
//! ε sweeps.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample;

use crate::data::{train_test_split, DataMatrix, FeatureSchema};
use crate::error::{Error, Result};
use crate::ldp::NoisyMatrix;
use crate::linalg::squared_distance;
use crate::models::{accuracy, label_accuracy, train_classifier, ClassifierKind};
use crate::num17;
use crate::par::parallel_map;
use crate::pca::TransformedMatrix;
use crate::pipeline::{concat_noisy, Pipeline, PipelineConfig};
use crate::rng::seeded_stream;
use crate::sandbox::{kmeans_assign, kmeans_fit_points, ClusterModel, KMeansOptions};

pub const DEFAULT_FPR: f64 = 0.05;
pub const DEFAULT_POOL_SAMPLES: usize = 200;
pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct PowerConfig {
    pub fpr: f64,
    pub n_control: usize,
    pub n_case: usize,
    pub seed: u64,
}

impl PowerConfig {
    pub fn new(fpr: f64, n_control: usize, n_case: usize, seed: u64) -> Result<Self> {
        let cfg = PowerConfig { fpr, n_control, n_case, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `min(200, available)` samples from each pool.
    pub fn for_pools(fpr: f64, control_available: usize, case_available: usize, seed: u64) -> Result<Self> {
        Self::new(
            fpr,
            DEFAULT_POOL_SAMPLES.min(control_available),
            DEFAULT_POOL_SAMPLES.min(case_available),
            seed,
        )
    }

    fn validate(&self) -> Result<()> {
        if !(self.fpr > 0.0 && self.fpr < 1.0) {
            return Err(Error::invalid(format!("fpr must be in (0,1), got {}", self.fpr)));
        }
        if self.n_control == 0 || self.n_case == 0 {
            return Err(Error::invalid("sample counts must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerReport {
    pub epsilon: f64,
    pub threshold: f64,
    pub power: f64,
    pub n_control: usize,
    pub n_case: usize,
}

/// For every query row, the Euclidean distance to its nearest shared row.
pub fn min_distances<'a>(queries: impl Iterator<Item = &'a [f64]>, shared: &NoisyMatrix) -> Vec<f64> {
    queries
        .map(|q| shared.rows().map(|s| squared_distance(q, s)).fold(f64::INFINITY, f64::min).sqrt())
        .collect()
}

/// Number of control distances the threshold must admit: ⌈fpr·n⌉, at least 1.
pub fn threshold_rank(fpr: f64, n: usize) -> usize {
    // guard against products like 0.05·200 landing a hair above an integer
    ((fpr * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// The ⌈fpr·n⌉-th smallest control distance.
pub fn fpr_threshold(control: &[f64], fpr: f64) -> Result<f64> {
    if control.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sorted = control.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[threshold_rank(fpr, sorted.len()) - 1])
}

/// Membership-inference power of a nearest-shared-row attacker at a fixed
/// false-positive rate on the control pool.
pub fn power_analysis(
    shared: &NoisyMatrix,
    case_pool: &TransformedMatrix,
    control_pool: &TransformedMatrix,
    cfg: &PowerConfig,
) -> Result<PowerReport> {
    cfg.validate()?;
    if shared.n_rows() == 0 || case_pool.n_rows() == 0 || control_pool.n_rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    for pool in [case_pool, control_pool] {
        if pool.k() != shared.k() {
            return Err(Error::DimensionMismatch { expected: shared.k(), got: pool.k() });
        }
        if pool.model_fingerprint() != shared.model_fingerprint() {
            return Err(Error::FingerprintMismatch { expected: shared.model_fingerprint(), got: pool.model_fingerprint() });
        }
    }
    if control_pool.n_rows() < cfg.n_control || case_pool.n_rows() < cfg.n_case {
        return Err(Error::insufficient("pool smaller than the requested sample count"));
    }
    let control_idx = sample(&mut seeded_stream(cfg.seed, 0), control_pool.n_rows(), cfg.n_control).into_vec();
    let case_idx = sample(&mut seeded_stream(cfg.seed, 1), case_pool.n_rows(), cfg.n_case).into_vec();
    let control = min_distances(control_idx.iter().map(|&i| control_pool.row(i)), shared);
    let case = min_distances(case_idx.iter().map(|&i| case_pool.row(i)), shared);
    let threshold = fpr_threshold(&control, cfg.fpr)?;
    let hits = case.iter().filter(|&&d| d <= threshold).count();
    Ok(PowerReport {
        epsilon: shared.epsilon(),
        threshold,
        power: hits as f64 / case.len() as f64,
        n_control: cfg.n_control,
        n_case: cfg.n_case,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityConfig {
    pub test_fraction: f64,
    pub seed: u64,
    /// Train on the noisy rows instead of the clean ones.
    pub train_on_noisy: bool,
}

impl UtilityConfig {
    pub fn new(seed: u64) -> Self {
        UtilityConfig { test_fraction: DEFAULT_TEST_FRACTION, seed, train_on_noisy: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityReport {
    pub epsilon: f64,
    pub classifier: ClassifierKind,
    pub accuracy_noisy: f64,
    pub accuracy_clean: f64,
}

fn cluster_label(c: usize) -> String {
    format!("c{c}")
}

/// Noise-free cluster label of every clean row.
pub fn cluster_labels(clean: &TransformedMatrix, cluster_model: &ClusterModel) -> Result<Vec<String>> {
    clean.rows().map(|r| kmeans_assign(cluster_model, r).map(cluster_label)).collect()
}

fn labeled(k: usize, values: Vec<f64>, labels: Vec<String>) -> Result<DataMatrix> {
    DataMatrix::new(FeatureSchema::components(k).with_label(Some("cluster"))?, values, Some(labels))
}

fn rows_of<'a>(rows: impl Iterator<Item = &'a [f64]>, idx: &[usize], k: usize) -> Vec<f64> {
    let all: Vec<&[f64]> = rows.collect();
    let mut out = Vec::with_capacity(idx.len() * k);
    for &i in idx {
        out.extend_from_slice(all[i]);
    }
    out
}

/// How well a classifier trained on clean rows recovers the noise-free cluster
/// labels from the noisy rows of held-out records.
pub fn utility_accuracy(
    clean: &TransformedMatrix,
    noisy: &NoisyMatrix,
    cluster_model: &ClusterModel,
    kind: ClassifierKind,
    cfg: &UtilityConfig,
) -> Result<UtilityReport> {
    if clean.n_rows() != noisy.n_rows() || clean.k() != noisy.k() {
        return Err(Error::invalid(format!(
            "clean ({}×{}) and noisy ({}×{}) rows are not aligned",
            clean.n_rows(),
            clean.k(),
            noisy.n_rows(),
            noisy.k()
        )));
    }
    let labels = cluster_labels(clean, cluster_model)?;
    let mut distinct = labels.clone();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::insufficient("all records fall in one cluster"));
    }
    let k = clean.k();
    let split = train_test_split(labels.len(), Some(&labels), cfg.test_fraction, cfg.seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| labels[i].clone()).collect::<Vec<_>>();
    let train_rows = if cfg.train_on_noisy {
        rows_of(noisy.rows(), &split.train, k)
    } else {
        rows_of(clean.rows(), &split.train, k)
    };
    let train = labeled(k, train_rows, pick(&split.train))?;
    let model = train_classifier(kind, &train, cfg.seed)?;
    let truth = pick(&split.test);
    let test_noisy = labeled(k, rows_of(noisy.rows(), &split.test, k), truth.clone())?;
    let test_clean = labeled(k, rows_of(clean.rows(), &split.test, k), truth.clone())?;
    Ok(UtilityReport {
        epsilon: noisy.epsilon(),
        classifier: kind,
        accuracy_noisy: label_accuracy(&model.predict(&test_noisy)?, &truth),
        accuracy_clean: label_accuracy(&model.predict(&test_clean)?, &truth),
    })
}

/// K-Means on clean rows, used as the noise-free labeling.
pub fn fit_clean_clusters(clean: &TransformedMatrix, c: usize, seed: u64) -> Result<ClusterModel> {
    let points: Vec<&[f64]> = clean.rows().collect();
    Ok(kmeans_fit_points(&points, c, seed, KMeansOptions::default())?.0)
}

/// ε used for each classifier in the privacy-protected arm.
pub const TABLE4_EPSILONS: [(ClassifierKind, f64); 3] =
    [(ClassifierKind::Logreg, 25.0), (ClassifierKind::Gnb, 35.0), (ClassifierKind::Svm, 35.0)];

#[derive(Debug, Clone, PartialEq)]
pub struct Table4Config {
    pub epsilons: Vec<(ClassifierKind, f64)>,
    pub pipeline: PipelineConfig,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Table4Config {
    pub fn new(seed: u64) -> Self {
        Table4Config {
            epsilons: TABLE4_EPSILONS.to_vec(),
            pipeline: PipelineConfig { seed, ..PipelineConfig::default() },
            test_fraction: DEFAULT_TEST_FRACTION,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table4Row {
    pub classifier: ClassifierKind,
    pub epsilon: f64,
    pub acc_centralized: f64,
    pub acc_aggregated: f64,
    pub acc_aggregated_clean: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table4Report {
    pub rows: Vec<Table4Row>,
}

impl Table4Report {
    /// Mean of centralized minus aggregated accuracy.
    pub fn average_gap(&self) -> f64 {
        self.rows.iter().map(|r| r.acc_centralized - r.acc_aggregated).sum::<f64>() / self.rows.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("classifier,epsilon,acc_centralized,acc_aggregated\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                r.classifier,
                r.epsilon,
                num17::format(r.acc_centralized),
                num17::format(r.acc_aggregated)
            );
        }
        let _ = writeln!(out, "# average_gap,{}", num17::format(self.average_gap()));
        out
    }
}

/// Centralized arm: each classifier on raw pooled rows with their own labels.
/// Aggregated arm: the same classifier on the privatized component-space
/// pipeline, scored against noise-free cluster labels.
pub fn table4_experiment(data: &DataMatrix, cfg: &Table4Config) -> Result<Table4Report> {
    if cfg.epsilons.is_empty() {
        return Err(Error::invalid("no classifiers requested"));
    }
    let labels = data.require_labels()?;
    let split = train_test_split(data.n_rows(), Some(labels), cfg.test_fraction, cfg.seed)?;
    let train = data.select(&split.train);
    let test = data.select(&split.test);

    let pipeline = Pipeline::build(data, &cfg.pipeline)?;
    let clean = pipeline.clean_pool()?;
    let clusters = fit_clean_clusters(&clean, cfg.pipeline.clusters, cfg.seed)?;
    let ucfg = UtilityConfig { test_fraction: cfg.test_fraction, seed: cfg.seed, train_on_noisy: false };

    let mut rows = Vec::new();
    for &(kind, epsilon) in &cfg.epsilons {
        let centralized = train_classifier(kind, &train, cfg.seed)?;
        let noisy = concat_noisy(&pipeline.privatize(epsilon, cfg.seed)?)?;
        let u = utility_accuracy(&clean, &noisy, &clusters, kind, &ucfg)?;
        rows.push(Table4Row {
            classifier: kind,
            epsilon,
            acc_centralized: accuracy(&centralized, &test)?,
            acc_aggregated: u.accuracy_noisy,
            acc_aggregated_clean: u.accuracy_clean,
        });
    }
    Ok(Table4Report { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Power,
    Utility,
    Both,
}

impl Experiment {
    fn power(self) -> bool {
        matches!(self, Experiment::Power | Experiment::Both)
    }

    fn utility(self) -> bool {
        matches!(self, Experiment::Utility | Experiment::Both)
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "power" => Ok(Experiment::Power),
            "utility" => Ok(Experiment::Utility),
            "both" => Ok(Experiment::Both),
            other => Err(Error::invalid(format!("unknown experiment {other:?} (expected power|utility|both)"))),
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Power => "power",
            Experiment::Utility => "utility",
            Experiment::Both => "both",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub epsilons: Vec<f64>,
    pub seeds: Vec<u64>,
    pub experiment: Experiment,
    pub pipeline: PipelineConfig,
    pub fpr: f64,
    pub classifiers: Vec<ClassifierKind>,
    pub jobs: usize,
}

impl SweepConfig {
    pub fn new(epsilons: Vec<f64>, seeds: Vec<u64>, experiment: Experiment) -> Self {
        SweepConfig {
            epsilons,
            seeds,
            experiment,
            pipeline: PipelineConfig::default(),
            fpr: DEFAULT_FPR,
            classifiers: vec![ClassifierKind::Logreg],
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerRow {
    pub epsilon: f64,
    pub seed: u64,
    pub threshold: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityRow {
    pub epsilon: f64,
    pub seed: u64,
    pub classifier: ClassifierKind,
    pub acc_noisy: f64,
    pub acc_clean: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub power: Vec<PowerRow>,
    pub utility: Vec<UtilityRow>,
}

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for &t in &idx[i..=j] {
                r[t] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Median and quartiles per group, groups in first-seen order.
fn summarize<K: PartialEq + Clone>(items: &[(K, f64)]) -> Vec<(K, [f64; 3])> {
    let mut keys: Vec<K> = Vec::new();
    for (k, _) in items {
        if !keys.contains(k) {
            keys.push(k.clone());
        }
    }
    keys.into_iter()
        .map(|k| {
            let v: Vec<f64> = items.iter().filter(|(kk, _)| *kk == k).map(|(_, x)| *x).collect();
            (k, [median(&v), quantile(&v, 0.25), quantile(&v, 0.75)])
        })
        .collect()
}

impl SweepResult {
    pub fn power_csv(&self) -> String {
        let mut out = String::from("epsilon,seed,threshold,power\n");
        for r in &self.power {
            let _ = writeln!(out, "{},{},{},{}", r.epsilon, r.seed, num17::format(r.threshold), num17::format(r.power));
        }
        out
    }

    pub fn utility_csv(&self) -> String {
        let mut out = String::from("epsilon,seed,classifier,acc_noisy,acc_clean\n");
        for r in &self.utility {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epsilon,
                r.seed,
                r.classifier,
                num17::format(r.acc_noisy),
                num17::format(r.acc_clean)
            );
        }
        out
    }

    /// `(ε, median, q25, q75)` of power per ε.
    pub fn power_summary(&self) -> Vec<(f64, [f64; 3])> {
        summarize(&self.power.iter().map(|r| (r.epsilon, r.power)).collect::<Vec<_>>())
    }

    /// `((ε, classifier), median, q25, q75)` of noisy accuracy.
    pub fn utility_summary(&self) -> Vec<((f64, ClassifierKind), [f64; 3])> {
        summarize(&self.utility.iter().map(|r| ((r.epsilon, r.classifier), r.acc_noisy)).collect::<Vec<_>>())
    }

    /// Whitespace-separated, gnuplot-ready.
    pub fn power_median_table(&self) -> String {
        let mut out = String::from("# epsilon median q25 q75\n");
        for (e, [m, lo, hi]) in self.power_summary() {
            let _ = writeln!(out, "{e} {} {} {}", num17::format(m), num17::format(lo), num17::format(hi));
        }
        out
    }

    pub fn utility_median_table(&self) -> String {
        let mut out = String::from("# epsilon classifier median q25 q75\n");
        for ((e, kind), [m, lo, hi]) in self.utility_summary() {
            let _ = writeln!(out, "{e} {kind} {} {} {}", num17::format(m), num17::format(lo), num17::format(hi));
        }
        out
    }
}

struct SeedSetup {
    pipeline: Pipeline,
    clean: TransformedMatrix,
    clusters: Option<ClusterModel>,
}

/// Grid of (ε, seed) runs over the case-study pipeline. Each seed fixes the
/// partition, the noise draws and the classifier training, so within a seed
/// only the noise magnitude changes with ε. Rows are ordered by (ε, seed).
pub fn sweep_epsilon(data: &DataMatrix, cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.epsilons.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::invalid("epsilon and seed lists must be non-empty"));
    }
    if cfg.experiment.utility() && cfg.classifiers.is_empty() {
        return Err(Error::invalid("utility sweep needs at least one classifier"));
    }
    let mut epsilons = cfg.epsilons.clone();
    epsilons.sort_by(f64::total_cmp);
    epsilons.dedup();
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();

    let setups = parallel_map(&seeds, cfg.jobs, |&seed| -> Result<SeedSetup> {
        let pipeline = Pipeline::build(data, &PipelineConfig { seed, ..cfg.pipeline.clone() })?;
        let clean = pipeline.clean_pool()?;
        let clusters = if cfg.experiment.utility() {
            Some(fit_clean_clusters(&clean, cfg.pipeline.clusters, seed)?)
        } else {
            None
        };
        Ok(SeedSetup { pipeline, clean, clusters })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let grid: Vec<(f64, usize)> = epsilons.iter().flat_map(|&e| (0..seeds.len()).map(move |s| (e, s))).collect();
    let runs = parallel_map(&grid, cfg.jobs, |&(epsilon, si)| -> Result<SweepResult> {
        let seed = seeds[si];
        let setup = &setups[si];
        let noisy = concat_noisy(&setup.pipeline.privatize(epsilon, seed)?)?;
        let mut out = SweepResult::default();
        if cfg.experiment.power() {
            let control = &setup.pipeline.global_transformed;
            let pc = PowerConfig::for_pools(cfg.fpr, control.n_rows(), setup.clean.n_rows(), seed)?;
            let r = power_analysis(&noisy, &setup.clean, control, &pc)?;
            out.power.push(PowerRow { epsilon, seed, threshold: r.threshold, power: r.power });
        }
        if let Some(clusters) = &setup.clusters {
            for &kind in &cfg.classifiers {
                let u = utility_accuracy(&setup.clean, &noisy, clusters, kind, &UtilityConfig::new(seed))?;
                out.utility.push(UtilityRow {
                    epsilon,
                    seed,
                    classifier: kind,
                    acc_noisy: u.accuracy_noisy,
                    acc_clean: u.accuracy_clean,
                });
            }
        }
        Ok(out)
    });
    let mut result = SweepResult::default();
    for r in runs {
        let r = r?;
        result.power.extend(r.power);
        result.utility.extend(r.utility);
    }
    Ok(result)
}
