mod common;

use std::collections::HashSet;

use agrishare::data::{
    generate_synthetic_market, load_csv_any, partition_indices, partition_markets, train_test_split, PartitionSpec,
};
use common::*;
use proptest::prelude::*;

#[test]
fn hand_written_csv_matches_manual_parse() {
    let text = "N,P,K,temperature,humidity,ph,rainfall,label\n\
                90,42,43,20.879744,82.002744,6.502985,202.935536,rice\n\
                85,58,41,21.770462,80.319644,7.038096,226.655537,rice\n\
                60,55,44,23.004459,82.320763,7.840207,263.964248,maize\n";
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("three.csv");
    std::fs::write(&path, text).unwrap();
    let data = load_csv_any(&path, Some("label")).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for line in text.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        rows.push(cells[..7].iter().map(|c| c.parse::<f64>().unwrap()).collect::<Vec<_>>());
        labels.push(cells[7].to_owned());
    }
    assert_eq!(data.n_rows(), 3);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(data.row(i), r.as_slice());
    }
    assert_eq!(data.labels().unwrap(), labels.as_slice());
}

#[test]
fn crop_markets_are_pairwise_disjoint() {
    let data = crop();
    let spec = PartitionSpec::new(5, 1.0 / 3.0, 4, true).unwrap();
    let (global, markets) = partition_indices(&data, &spec).unwrap();
    assert_eq!(global.len(), 2200 / 3);
    let sets: Vec<HashSet<usize>> = markets.iter().map(|m| m.iter().copied().collect()).collect();
    for i in 0..5 {
        assert!(global.iter().all(|g| !sets[i].contains(g)));
        for j in i + 1..5 {
            assert_eq!(sets[i].intersection(&sets[j]).count(), 0, "markets {i} and {j} overlap");
        }
    }
    let total: usize = global.len() + markets.iter().map(Vec::len).sum::<usize>();
    assert_eq!(total, 2200);
    let sizes: HashSet<usize> = markets.iter().map(Vec::len).collect();
    assert!(sizes.len() > 1, "market sizes should be uneven");
}

#[test]
fn market_flags_are_binary() {
    let data = generate_synthetic_market(1000, 8).unwrap();
    assert_eq!(data.n_features(), 12);
    for j in 1..10 {
        assert!(data.column(j).iter().all(|&v| v == 0.0 || v == 1.0), "column {j}");
    }
    for j in [0, 10, 11] {
        assert!(data.column(j).iter().all(|&v| v >= 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partition_is_a_disjoint_cover(n in 8usize..300, markets in 1usize..7, frac in 0.05f64..0.9, seed: u64, stratify: bool) {
        // Every market needs at least one row outside the global split.
        prop_assume!(n - (frac * n as f64).floor() as usize >= markets);
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let labels: Vec<String> = (0..n).map(|i| format!("c{}", i % 3)).collect();
        let labels: Vec<&str> = labels.iter().map(String::as_str).collect();
        let data = labeled(&rows, &labels);
        let spec = PartitionSpec::new(markets, frac, seed, stratify).unwrap();
        let (global, shards) = partition_indices(&data, &spec).unwrap();
        prop_assert_eq!(global.len(), (frac * n as f64).floor() as usize);
        let mut seen = vec![0u8; n];
        for &i in global.iter().chain(shards.iter().flatten()) {
            seen[i] += 1;
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        // The matrix form carries the same rows.
        let (g, m) = partition_markets(&data, &spec).unwrap();
        prop_assert_eq!(g.n_rows(), global.len());
        prop_assert_eq!(m.iter().map(|d| d.n_rows()).collect::<Vec<_>>(), shards.iter().map(Vec::len).collect::<Vec<_>>());
    }

    #[test]
    fn split_is_a_disjoint_cover(n in 2usize..200, frac in 0.05f64..0.95, seed: u64) {
        let labels: Vec<String> = (0..n).map(|i| format!("c{}", i % 4)).collect();
        let s = train_test_split(n, Some(&labels), frac, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert!(!s.train.is_empty());
    }
}
