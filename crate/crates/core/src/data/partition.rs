use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::DataMatrix;
use crate::error::{Error, Result};
use crate::rng::{seeded, seeded_stream, SeededRng};

/// How to split a dataset into the researcher's global set plus market shards.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionSpec {
    pub n_markets: usize,
    pub global_fraction: f64,
    pub seed: u64,
    pub stratify_by_label: bool,
}

impl PartitionSpec {
    pub fn new(n_markets: usize, global_fraction: f64, seed: u64, stratify_by_label: bool) -> Result<Self> {
        let spec = PartitionSpec { n_markets, global_fraction, seed, stratify_by_label };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.n_markets == 0 {
            return Err(Error::invalid("n_markets must be at least 1"));
        }
        if !(self.global_fraction > 0.0 && self.global_fraction < 1.0) {
            return Err(Error::invalid(format!("global_fraction must be in (0,1), got {}", self.global_fraction)));
        }
        Ok(())
    }
}

/// Split `total` into parts proportional to `weights` by largest remainder.
fn apportion(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// Normalized positive random weights; uneven by construction.
fn uneven_weights(rng: &mut SeededRng, k: usize) -> Vec<f64> {
    // exponential draws normalize to a flat Dirichlet sample
    let w: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln() + 0.05).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

/// Row-index form of [`partition_markets`]: `(global, markets)`.
pub fn partition_indices(data: &DataMatrix, spec: &PartitionSpec) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    spec.validate()?;
    let n = data.n_rows();
    if n < spec.n_markets + 1 {
        return Err(Error::insufficient(format!(
            "{n} rows cannot fill a global set and {} markets",
            spec.n_markets
        )));
    }
    let n_global = (spec.global_fraction * n as f64).floor() as usize;
    if n - n_global < spec.n_markets {
        return Err(Error::insufficient("global fraction leaves fewer rows than markets"));
    }

    let groups: Vec<Vec<usize>> = if spec.stratify_by_label {
        let labels = data
            .labels()
            .ok_or_else(|| Error::invalid("stratified partition requested for unlabeled data"))?;
        let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            by_label.entry(l).or_default().push(i);
        }
        by_label.into_values().collect()
    } else {
        vec![(0..n).collect()]
    };

    let sizes: Vec<f64> = groups.iter().map(|g| g.len() as f64).collect();
    let global_per_group = apportion(n_global, &sizes);

    let mut global = Vec::with_capacity(n_global);
    let mut markets = vec![Vec::new(); spec.n_markets];
    for (gi, (mut group, n_g)) in groups.into_iter().zip(global_per_group).enumerate() {
        let mut rng = seeded_stream(spec.seed, gi as u64);
        group.shuffle(&mut rng);
        global.extend_from_slice(&group[..n_g]);
        let rest = &group[n_g..];
        let weights = uneven_weights(&mut rng, spec.n_markets);
        let mut start = 0;
        for (m, count) in apportion(rest.len(), &weights).into_iter().enumerate() {
            markets[m].extend_from_slice(&rest[start..start + count]);
            start += count;
        }
    }

    // every market must hold at least one row
    for m in 0..markets.len() {
        if markets[m].is_empty() {
            let donor = (0..markets.len()).max_by_key(|&j| (markets[j].len(), usize::MAX - j)).expect("n_markets >= 1");
            let row = markets[donor].pop().expect("donor has rows");
            markets[m].push(row);
        }
    }
    global.sort_unstable();
    for m in &mut markets {
        m.sort_unstable();
    }
    Ok((global, markets))
}

/// Split rows into a global set with ⌊global_fraction·n⌋ rows and
/// `n_markets` unevenly sized, pairwise disjoint market shards.
pub fn partition_markets(data: &DataMatrix, spec: &PartitionSpec) -> Result<(DataMatrix, Vec<DataMatrix>)> {
    let (global, markets) = partition_indices(data, spec)?;
    Ok((data.select(&global), markets.iter().map(|m| data.select(m)).collect()))
}

/// Seeded train/test split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Split row indices into train/test, stratified by `labels` when given.
/// Each stratum contributes `round(test_fraction * size)` test rows, keeping
/// at least one training row per stratum.
pub fn train_test_split(n: usize, labels: Option<&[String]>, test_fraction: f64, seed: u64) -> Result<Split> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid("test fraction must be in (0,1)"));
    }
    if n < 2 {
        return Err(Error::insufficient("need at least 2 rows to split"));
    }
    let groups: Vec<Vec<usize>> = match labels {
        Some(labels) => {
            let mut by_label: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, l) in labels.iter().enumerate().take(n) {
                by_label.entry(l).or_default().push(i);
            }
            by_label.into_values().collect()
        }
        None => vec![(0..n).collect()],
    };
    let mut rng = seeded(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut g in groups {
        g.shuffle(&mut rng);
        let mut n_test = (test_fraction * g.len() as f64).round() as usize;
        n_test = n_test.min(g.len().saturating_sub(1));
        test.extend_from_slice(&g[..n_test]);
        train.extend_from_slice(&g[n_test..]);
    }
    if test.is_empty() {
        // tiny strata: move one training row over
        test.push(train.pop().expect("n >= 2"));
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ten_rows() -> DataMatrix {
        DataMatrix::unlabeled(1, (0..10).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn conserves_rows() {
        let spec = PartitionSpec::new(2, 0.2, 7, false).unwrap();
        let (g, m) = partition_indices(&ten_rows(), &spec).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(m.iter().map(Vec::len).sum::<usize>(), 8);
        let mut all: Vec<usize> = g.iter().chain(m.iter().flatten()).copied().collect();
        all.sort();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(m.iter().all(|x| !x.is_empty()));
    }

    #[test]
    fn deterministic() {
        let spec = PartitionSpec::new(2, 0.2, 7, false).unwrap();
        let a = partition_markets(&ten_rows(), &spec).unwrap();
        let b = partition_markets(&ten_rows(), &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn errors() {
        assert!(PartitionSpec::new(0, 0.2, 1, false).is_err());
        assert!(PartitionSpec::new(2, 1.0, 1, false).is_err());
        let spec = PartitionSpec::new(10, 0.2, 1, false).unwrap();
        assert!(partition_indices(&ten_rows(), &spec).is_err());
        let spec = PartitionSpec::new(2, 0.2, 1, true).unwrap();
        assert!(partition_indices(&ten_rows(), &spec).is_err());
    }

    #[test]
    fn apportion_sums() {
        assert_eq!(apportion(10, &[1.0, 1.0, 1.0]).iter().sum::<usize>(), 10);
        assert_eq!(apportion(7, &[0.5, 0.5]), vec![4, 3]);
    }

    #[test]
    fn stratified_split_keeps_classes() {
        let labels: Vec<String> = (0..50).map(|i| if i < 30 { "a".into() } else { "b".into() }).collect();
        let s = train_test_split(50, Some(&labels), 0.2, 3).unwrap();
        assert_eq!(s.test.len(), 10);
        assert_eq!(s.test.iter().filter(|&&i| labels[i] == "a").count(), 6);
        let again = train_test_split(50, Some(&labels), 0.2, 3).unwrap();
        assert_eq!(s, again);
    }
}
