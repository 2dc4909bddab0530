mod common;

use agrishare::eval::{
    fit_clean_clusters, fpr_threshold, median, power_analysis, spearman, sweep_epsilon, threshold_rank,
    utility_accuracy, Experiment, PowerConfig, SweepConfig, UtilityConfig,
};
use agrishare::ldp::NoisyMatrix;
use agrishare::models::ClassifierKind;
use agrishare::pca::TransformedMatrix;
use agrishare::pipeline::{concat_noisy, Pipeline, PipelineConfig};
use common::*;
use proptest::prelude::*;
use rand::Rng;

const FP: u64 = 77;

fn cloud(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..2 * n).map(|_| r.random_range(-3.0..3.0)).collect()
}

/// Nearest-shared-row distances, computed pair by pair.
fn oracle_min(queries: &[f64], shared: &[f64]) -> Vec<f64> {
    queries
        .chunks(2)
        .map(|q| shared.chunks(2).map(|s| sq_dist(q, s).sqrt()).fold(f64::INFINITY, f64::min))
        .collect()
}

#[test]
fn power_matches_all_pairs_oracle() {
    let mut r = rng(1);
    for trial in 0..10 {
        let shared = cloud(&mut r, 80);
        let case: Vec<f64> = shared.iter().map(|v| v + r.random_range(-0.2..0.2)).collect();
        let control = cloud(&mut r, 60);
        // Using every pool row makes the sample a permutation, so the result is order-free.
        let cfg = PowerConfig::new(0.05, 60, 80, trial).unwrap();
        let got = power_analysis(
            &NoisyMatrix::new(2, shared.clone(), 3.0, FP).unwrap(),
            &TransformedMatrix::new(2, case.clone(), FP).unwrap(),
            &TransformedMatrix::new(2, control.clone(), FP).unwrap(),
            &cfg,
        )
        .unwrap();
        let mut c = oracle_min(&control, &shared);
        c.sort_by(f64::total_cmp);
        let threshold = c[(0.05f64 * 60.0).ceil() as usize - 1];
        let hits = oracle_min(&case, &shared).iter().filter(|&&d| d <= threshold).count();
        assert_eq!(got.threshold, threshold);
        assert_eq!(got.power, hits as f64 / 80.0);
    }
}

#[test]
fn null_attack_sits_at_the_false_positive_rate() {
    // Case and control rows are both outsiders drawn from one distribution.
    let mut r = rng(2);
    let mut powers = Vec::new();
    for trial in 0..20 {
        let shared = NoisyMatrix::new(2, cloud(&mut r, 300), 1.0, FP).unwrap();
        let case = TransformedMatrix::new(2, cloud(&mut r, 200), FP).unwrap();
        let control = TransformedMatrix::new(2, cloud(&mut r, 200), FP).unwrap();
        let cfg = PowerConfig::new(0.05, 200, 200, trial).unwrap();
        powers.push(power_analysis(&shared, &case, &control, &cfg).unwrap().power);
    }
    let mean = powers.iter().sum::<f64>() / 20.0;
    assert!((mean - 0.05).abs() <= 0.02, "mean null power {mean}, {powers:?}");
}

fn crop_pipeline(seed: u64) -> Pipeline {
    Pipeline::build(&crop(), &PipelineConfig { seed, ..Default::default() }).unwrap()
}

#[test]
fn negligible_noise_exposes_members() {
    let p = crop_pipeline(3);
    let shared = concat_noisy(&p.privatize(1e9, 3).unwrap()).unwrap();
    let clean = p.clean_pool().unwrap();
    let control = &p.global_transformed;
    let cfg = PowerConfig::for_pools(0.05, control.n_rows(), clean.n_rows(), 3).unwrap();
    let r = power_analysis(&shared, &clean, control, &cfg).unwrap();
    assert!(r.power >= 0.95, "power {}", r.power);
}

#[test]
fn utility_is_exact_without_noise() {
    let p = crop_pipeline(4);
    let clean = p.clean_pool().unwrap();
    let clusters = fit_clean_clusters(&clean, 4, 4).unwrap();
    let noisy = concat_noisy(&p.privatize(1e9, 4).unwrap()).unwrap();
    for kind in ClassifierKind::ALL {
        let u = utility_accuracy(&clean, &noisy, &clusters, kind, &UtilityConfig::new(4)).unwrap();
        assert_eq!(u.accuracy_noisy, u.accuracy_clean, "{kind}");
        assert!(u.accuracy_clean >= 0.9, "{kind}: {}", u.accuracy_clean);
    }
}

#[test]
fn single_cell_sweep_matches_direct_computation() {
    let data = crop();
    let mut cfg = SweepConfig::new(vec![10.0], vec![5], Experiment::Both);
    cfg.classifiers = vec![ClassifierKind::Gnb];
    let res = sweep_epsilon(&data, &cfg).unwrap();
    assert_eq!((res.power.len(), res.utility.len()), (1, 1));

    let p = crop_pipeline(5);
    let clean = p.clean_pool().unwrap();
    let noisy = concat_noisy(&p.privatize(10.0, 5).unwrap()).unwrap();
    let control = &p.global_transformed;
    let pc = PowerConfig::for_pools(0.05, control.n_rows(), clean.n_rows(), 5).unwrap();
    assert_eq!(res.power[0].power, power_analysis(&noisy, &clean, control, &pc).unwrap().power);
    let clusters = fit_clean_clusters(&clean, 4, 5).unwrap();
    let u = utility_accuracy(&clean, &noisy, &clusters, ClassifierKind::Gnb, &UtilityConfig::new(5)).unwrap();
    assert_eq!(res.utility[0].acc_noisy, u.accuracy_noisy);
}

#[test]
fn sweep_is_deterministic_across_jobs() {
    let data = crop();
    let mut cfg = SweepConfig::new(vec![1.0, 20.0], vec![1, 2], Experiment::Both);
    let a = sweep_epsilon(&data, &cfg).unwrap();
    cfg.jobs = 4;
    let b = sweep_epsilon(&data, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.power_csv(), b.power_csv());
}

#[test]
fn spearman_matches_rank_formula() {
    let mut r = rng(6);
    for _ in 0..20 {
        let n = r.random_range(3..40);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let rank = |v: &[f64]| -> Vec<f64> { v.iter().map(|a| v.iter().filter(|b| *b < a).count() as f64).collect() };
        let (rx, ry) = (rank(&x), rank(&y));
        let d2: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - b).powi(2)).sum();
        let nf = n as f64;
        let want = 1.0 - 6.0 * d2 / (nf * (nf * nf - 1.0));
        assert!((spearman(&x, &y) - want).abs() <= 1e-12);
    }
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
}

proptest! {
    #[test]
    fn threshold_admits_the_requested_rank(control in prop::collection::vec(0.0f64..100.0, 1..300), fpr in 0.001f64..0.999) {
        let t = fpr_threshold(&control, fpr).unwrap();
        let rank = threshold_rank(fpr, control.len());
        let at_most = control.iter().filter(|&&d| d <= t).count();
        let below = control.iter().filter(|&&d| d < t).count();
        prop_assert!(at_most >= rank);
        prop_assert!(below < rank);
        prop_assert!(rank as f64 >= fpr * control.len() as f64 - 1e-9);
        prop_assert!((rank as f64) < fpr * control.len() as f64 + 1.0 || rank == 1);
    }
}
