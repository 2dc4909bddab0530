//! The aggregation sandbox: holds privatized shares only, clusters them and
//! answers collaborator queries.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ldp::NoisyMatrix;
use crate::linalg::{distance, squared_distance};
use crate::num17;
use crate::pca::{format_fingerprint, parse_fingerprint};
use crate::rng::{seeded_stream, SeededRng};

pub const KMEANS_RESTARTS: usize = 10;
pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantShare {
    pub participant_id: String,
    pub matrix: NoisyMatrix,
}

impl ParticipantShare {
    pub fn new(participant_id: impl Into<String>, matrix: NoisyMatrix) -> Result<Self> {
        let participant_id = participant_id.into();
        if participant_id.is_empty() {
            return Err(Error::invalid("participant id must be non-empty"));
        }
        Ok(ParticipantShare { participant_id, matrix })
    }
}

/// Location of an aggregated row: participant and row index within its share.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowRef {
    pub participant: String,
    pub row: usize,
}

/// Shares of all participants, keyed by id, bound to one model fingerprint.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedStore {
    model_fingerprint: u64,
    shares: BTreeMap<String, NoisyMatrix>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    fingerprint: String,
    participant_ids: Vec<String>,
    row_counts: Vec<usize>,
}

impl AggregatedStore {
    pub fn new(model_fingerprint: u64) -> Self {
        AggregatedStore { model_fingerprint, shares: BTreeMap::new() }
    }

    pub fn model_fingerprint(&self) -> u64 {
        self.model_fingerprint
    }

    /// Add a share. On error the store is unchanged.
    pub fn submit_share(&mut self, share: ParticipantShare) -> Result<()> {
        if share.participant_id.is_empty() {
            return Err(Error::invalid("participant id must be non-empty"));
        }
        if share.matrix.model_fingerprint() != self.model_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.model_fingerprint,
                got: share.matrix.model_fingerprint(),
            });
        }
        if let Some(k) = self.k() {
            if share.matrix.k() != k {
                return Err(Error::DimensionMismatch { expected: k, got: share.matrix.k() });
            }
        }
        if self.shares.contains_key(&share.participant_id) {
            return Err(Error::DuplicateParticipant(share.participant_id));
        }
        self.shares.insert(share.participant_id, share.matrix);
        Ok(())
    }

    pub fn k(&self) -> Option<usize> {
        self.shares.values().next().map(NoisyMatrix::k)
    }

    pub fn n_participants(&self) -> usize {
        self.shares.len()
    }

    pub fn participant_ids(&self) -> impl Iterator<Item = &str> {
        self.shares.keys().map(String::as_str)
    }

    pub fn share(&self, id: &str) -> Result<&NoisyMatrix> {
        self.shares.get(id).ok_or_else(|| Error::UnknownParticipant(id.to_owned()))
    }

    pub fn total_rows(&self) -> usize {
        self.shares.values().map(NoisyMatrix::n_rows).sum()
    }

    /// All rows in participant-id order, with provenance.
    pub fn rows(&self) -> impl Iterator<Item = (RowRef, &[f64])> {
        self.shares.iter().flat_map(|(id, m)| {
            m.rows().enumerate().map(move |(i, r)| (RowRef { participant: id.clone(), row: i }, r))
        })
    }

    /// Flattened rows (participant-id order).
    pub fn points(&self) -> Vec<f64> {
        self.shares.values().flat_map(|m| m.values().iter().copied()).collect()
    }

    /// Write `manifest.json` plus one `<participant>.csv` per share into `dir`.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let manifest = Manifest {
            fingerprint: format_fingerprint(self.model_fingerprint),
            participant_ids: self.shares.keys().cloned().collect(),
            row_counts: self.shares.values().map(NoisyMatrix::n_rows).collect(),
        };
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
        for (id, m) in &self.shares {
            m.save(dir.join(share_file_name(id)?))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.participant_ids.len() != manifest.row_counts.len() {
            return Err(Error::Format("manifest ids and row counts differ in length".into()));
        }
        let mut store = AggregatedStore::new(parse_fingerprint(&manifest.fingerprint)?);
        for (id, &rows) in manifest.participant_ids.iter().zip(&manifest.row_counts) {
            let m = NoisyMatrix::load(dir.join(share_file_name(id)?))?;
            if m.n_rows() != rows {
                return Err(Error::Format(format!("share {id:?} has {} rows, manifest says {rows}", m.n_rows())));
            }
            store.submit_share(ParticipantShare::new(id.clone(), m)?)?;
        }
        Ok(store)
    }
}

fn share_file_name(id: &str) -> Result<String> {
    if id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') && !id.starts_with('.') {
        Ok(format!("{id}.csv"))
    } else {
        Err(Error::invalid(format!("participant id {id:?} is not usable as a file name")))
    }
}

/// K-Means centroids in component space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    #[serde(serialize_with = "num17::matrix")]
    pub centroids: Vec<Vec<f64>>,
    #[serde(serialize_with = "num17::f64")]
    pub inertia: f64,
    pub seed: u64,
    /// Training points per cluster.
    pub sizes: Vec<usize>,
    /// Lloyd iterations of the winning restart.
    pub iterations: usize,
}

impl ClusterModel {
    pub fn c(&self) -> usize {
        self.centroids.len()
    }

    pub fn k(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: ClusterModel = serde_json::from_str(&text)?;
        if m.centroids.is_empty() || m.centroids.iter().any(|c| c.len() != m.k()) {
            return Err(Error::Format("cluster model has inconsistent centroids".into()));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions { restarts: KMEANS_RESTARTS, max_iter: KMEANS_MAX_ITER }
    }
}

/// Index of the nearest centroid; the lowest index wins ties.
fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init(points: &[&[f64]], c: usize, rng: &mut SeededRng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.random_range(0..points.len())].to_vec()];
    let mut d2: Vec<f64> = points.iter().map(|p| squared_distance(p, &centroids[0])).collect();
    while centroids.len() < c {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if target < *w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        } else {
            rng.random_range(0..points.len())
        };
        centroids.push(points[next].to_vec());
        let last = centroids.last().expect("just pushed");
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(squared_distance(p, last));
        }
    }
    centroids
}

struct LloydRun {
    centroids: Vec<Vec<f64>>,
    inertia: f64,
    labels: Vec<usize>,
    trace: Vec<f64>,
}

fn lloyd(points: &[&[f64]], mut centroids: Vec<Vec<f64>>, max_iter: usize) -> LloydRun {
    let k = points[0].len();
    let mut labels = vec![usize::MAX; points.len()];
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        let mut changed = false;
        let mut inertia = 0.0;
        for (l, p) in labels.iter_mut().zip(points) {
            let (best, d) = nearest(&centroids, p);
            inertia += d;
            if *l != best {
                *l = best;
                changed = true;
            }
        }
        if let Some(&prev) = trace.last() {
            debug_assert!(inertia <= prev * (1.0 + 1e-12) + 1e-12, "inertia increased: {prev} -> {inertia}");
        }
        trace.push(inertia);
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; k]; centroids.len()];
        let mut counts = vec![0usize; centroids.len()];
        for (l, p) in labels.iter().zip(points) {
            counts[*l] += 1;
            for (s, x) in sums[*l].iter_mut().zip(p.iter()) {
                *s += x;
            }
        }
        for (c, (s, n)) in centroids.iter_mut().zip(sums.into_iter().zip(counts)) {
            // empty clusters keep their centroid
            if n > 0 {
                *c = s.into_iter().map(|x| x / n as f64).collect();
            }
        }
    }
    let inertia = points.iter().map(|p| nearest(&centroids, p).1).sum();
    for (l, p) in labels.iter_mut().zip(points) {
        *l = nearest(&centroids, p).0;
    }
    LloydRun { centroids, inertia, labels, trace }
}

/// Lloyd's algorithm with k-means++ seeding, best of `opts.restarts` runs.
/// Returns the model and the per-iteration inertia trace of the winning run.
pub fn kmeans_fit_points(points: &[&[f64]], c: usize, seed: u64, opts: KMeansOptions) -> Result<(ClusterModel, Vec<f64>)> {
    if c == 0 {
        return Err(Error::invalid("cluster count must be positive"));
    }
    if points.len() < c {
        return Err(Error::insufficient(format!("{} points cannot form {c} clusters", points.len())));
    }
    let k = points[0].len();
    if points.iter().any(|p| p.len() != k) {
        return Err(Error::invalid("points have inconsistent dimension"));
    }
    let mut best: Option<LloydRun> = None;
    for r in 0..opts.restarts.max(1) {
        let mut rng = seeded_stream(seed, r as u64);
        let init = plus_plus_init(points, c, &mut rng);
        let run = lloyd(points, init, opts.max_iter.max(1));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("at least one restart");
    let mut sizes = vec![0; c];
    for &l in &best.labels {
        sizes[l] += 1;
    }
    Ok((
        ClusterModel {
            centroids: best.centroids,
            inertia: best.inertia,
            seed,
            sizes,
            iterations: best.trace.len(),
        },
        best.trace,
    ))
}

/// Cluster all aggregated rows.
pub fn kmeans_fit(store: &AggregatedStore, c: usize, seed: u64) -> Result<ClusterModel> {
    let points: Vec<&[f64]> = store.rows().map(|(_, r)| r).collect();
    if points.is_empty() {
        return Err(Error::insufficient("store holds no rows"));
    }
    Ok(kmeans_fit_points(&points, c, seed, KMeansOptions::default())?.0)
}

pub fn kmeans_assign(model: &ClusterModel, point: &[f64]) -> Result<usize> {
    if point.len() != model.k() {
        return Err(Error::DimensionMismatch { expected: model.k(), got: point.len() });
    }
    Ok(nearest(&model.centroids, point).0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub participant: String,
    pub row: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub query_label: usize,
    pub neighbors: Vec<Neighbor>,
}

/// Up to `m` aggregated rows nearest to `profile` within its assigned cluster.
pub fn recommend_collaborators(
    store: &AggregatedStore,
    cluster_model: &ClusterModel,
    profile: &[f64],
    m: usize,
) -> Result<Recommendation> {
    if store.total_rows() == 0 {
        return Err(Error::insufficient("store is empty"));
    }
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    let query_label = kmeans_assign(cluster_model, profile)?;
    let mut neighbors: Vec<(RowRef, f64)> = store
        .rows()
        .filter(|(_, r)| nearest(&cluster_model.centroids, r).0 == query_label)
        .map(|(rr, r)| (rr, distance(r, profile)))
        .collect();
    neighbors.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    neighbors.truncate(m);
    Ok(Recommendation {
        query_label,
        neighbors: neighbors
            .into_iter()
            .map(|(rr, d)| Neighbor { participant: rr.participant, row: rr.row, distance: d })
            .collect(),
    })
}

fn column_mean(m: &NoisyMatrix) -> Vec<f64> {
    let mut mean = vec![0.0; m.k()];
    for r in m.rows() {
        for (a, x) in mean.iter_mut().zip(r) {
            *a += x;
        }
    }
    mean.iter_mut().for_each(|a| *a /= m.n_rows() as f64);
    mean
}

/// Euclidean distance between two participants' mean rows.
pub fn market_similarity_profile(store: &AggregatedStore, a: &str, b: &str) -> Result<f64> {
    let (ma, mb) = (store.share(a)?, store.share(b)?);
    if ma.n_rows() == 0 || mb.n_rows() == 0 {
        return Err(Error::insufficient("participant share has no rows"));
    }
    Ok(distance(&column_mean(ma), &column_mean(mb)))
}

fn column_mean_std(m: &NoisyMatrix) -> Vec<(f64, f64)> {
    let n = m.n_rows() as f64;
    let mean = column_mean(m);
    let mut ss = vec![0.0; m.k()];
    for r in m.rows() {
        for j in 0..m.k() {
            ss[j] += (r[j] - mean[j]).powi(2);
        }
    }
    mean.into_iter().zip(ss).map(|(mu, s)| (mu, (s / (n - 1.0)).sqrt())).collect()
}

/// Sum over components of the 2-Wasserstein distance between per-component
/// Gaussian fits (sample standard deviation).
pub fn market_similarity_distribution(store: &AggregatedStore, a: &str, b: &str) -> Result<f64> {
    let (ma, mb) = (store.share(a)?, store.share(b)?);
    for (id, m) in [(a, ma), (b, mb)] {
        if m.n_rows() < 2 {
            return Err(Error::insufficient(format!("participant {id:?} has fewer than 2 rows")));
        }
    }
    Ok(column_mean_std(ma)
        .into_iter()
        .zip(column_mean_std(mb))
        .map(|((mu_a, sd_a), (mu_b, sd_b))| ((mu_a - mu_b).powi(2) + (sd_a - sd_b).powi(2)).sqrt())
        .sum())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMode {
    #[default]
    Profile,
    Distribution,
}

impl FromStr for SimilarityMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "profile" => Ok(SimilarityMode::Profile),
            "distribution" => Ok(SimilarityMode::Distribution),
            other => Err(Error::invalid(format!("unknown similarity mode {other:?}"))),
        }
    }
}

impl fmt::Display for SimilarityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SimilarityMode::Profile => "profile",
            SimilarityMode::Distribution => "distribution",
        })
    }
}

pub fn market_similarity(store: &AggregatedStore, a: &str, b: &str, mode: SimilarityMode) -> Result<f64> {
    match mode {
        SimilarityMode::Profile => market_similarity_profile(store, a, b),
        SimilarityMode::Distribution => market_similarity_distribution(store, a, b),
    }
}

/// The `m` participants closest to `initiator`, with their distances,
/// ascending (ties by id). The initiator is never included.
pub fn rank_collaborators(
    store: &AggregatedStore,
    initiator: &str,
    m: usize,
    mode: SimilarityMode,
) -> Result<Vec<(String, f64)>> {
    store.share(initiator)?;
    if m == 0 {
        return Err(Error::invalid("m must be at least 1"));
    }
    if store.n_participants() < m + 1 {
        return Err(Error::insufficient(format!(
            "need {} participants to pick {m} collaborators, store has {}",
            m + 1,
            store.n_participants()
        )));
    }
    let mut ranked = Vec::new();
    for id in store.participant_ids().filter(|id| *id != initiator) {
        ranked.push((id.to_owned(), market_similarity(store, initiator, id, mode)?));
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(m);
    Ok(ranked)
}

pub fn select_collaborators(store: &AggregatedStore, initiator: &str, m: usize, mode: SimilarityMode) -> Result<Vec<String>> {
    Ok(rank_collaborators(store, initiator, m, mode)?.into_iter().map(|(id, _)| id).collect())
}
