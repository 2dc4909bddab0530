mod common;

use agrishare::data::{apply_standardizer, fit_standardizer, DataMatrix};
use agrishare::pca::{explained_variance_ratio, pca_fit, pca_transform, PcaModel};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn projections(model: &PcaModel, data: &DataMatrix) -> Vec<Vec<f64>> {
    let t = pca_transform(model, data).unwrap();
    t.rows().map(<[f64]>::to_vec).collect()
}

#[test]
fn random_matrices_match_jacobi() {
    let mut r = rng(7);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = r.random_range(2..=10);
        let n = r.random_range(d + 2..=200);
        let k = r.random_range(1..=d);
        let rows = random_rows(&mut r, n, d);
        let data = unlabeled(&rows);
        let model = pca_fit(&data, k).unwrap();
        let (oracle, values, _) = oracle_projection(&rows, k);
        worst = worst.max(max_diff_up_to_sign(&projections(&model, &data), &oracle));
        for (a, b) in model.eigenvalues().iter().zip(&values) {
            assert!((a - b).abs() <= 1e-9 * values[0].max(1.0));
        }
    }
    assert!(worst <= 1e-8, "max abs diff {worst:e}");
}

#[test]
fn crop_projection_matches_jacobi() {
    let data = crop();
    let rows: Vec<Vec<f64>> = data.rows().map(<[f64]>::to_vec).collect();
    let model = pca_fit(&data, 2).unwrap();
    let (oracle, values, vectors) = oracle_projection(&rows, 2);
    assert!(max_diff_up_to_sign(&projections(&model, &data), &oracle) <= 1e-8);

    let total: f64 = values.iter().sum();
    for (got, want) in explained_variance_ratio(&model).iter().zip(values.iter().map(|v| v / total)) {
        assert!((got - want).abs() <= 1e-9, "{got} vs {want}");
    }

    // A single row, standardized and multiplied by the oracle eigenvectors.
    let row = [90.0, 42.0, 43.0, 20.879744, 82.002744, 6.502985, 202.935536];
    let (_, means, scales) = standardize(&rows);
    let z: Vec<f64> = (0..7).map(|j| (row[j] - means[j]) / scales[j]).collect();
    let got = model.project_row(&row).unwrap();
    for c in 0..2 {
        let want = dot(&z, &vectors[c]);
        assert!((got[c].abs() - want.abs()).abs() <= 1e-8);
    }
}

#[test]
fn standardizer_matches_two_pass() {
    let data = crop();
    let p = fit_standardizer(&data).unwrap();
    for j in 0..data.n_features() {
        let (m, s) = two_pass(&data.column(j));
        assert!((p.means[j] - m).abs() <= 1e-9 * m.abs().max(1.0));
        assert!((p.scales[j] - s).abs() <= 1e-9 * s);
    }
    // Refitting on standardized data gives the identity transform.
    let z = apply_standardizer(&p, &data).unwrap();
    let again = fit_standardizer(&z).unwrap();
    assert!(again.means.iter().all(|m| m.abs() < 1e-6));
    assert!(again.scales.iter().all(|s| (s - 1.0).abs() < 1e-6));
    for (i, row) in data.rows().take(50).enumerate() {
        let back = p.inverse_row(z.row(i));
        assert!(back.iter().zip(row).all(|(a, b)| (a - b).abs() <= 1e-9 * b.abs().max(1.0)));
    }
}

#[test]
fn full_rank_ratios_sum_to_one() {
    let data = crop();
    let model = pca_fit(&data, 7).unwrap();
    let r = explained_variance_ratio(&model);
    assert!((r.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    assert!(r.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn linear_when_standardizer_is_identity() {
    // Columns already mean 0 and population SD 1, so the fitted standardizer is identity.
    let rows = vec![vec![1.0, 1.0], vec![-1.0, 1.0], vec![1.0, -1.0], vec![-1.0, -1.0]];
    let model = pca_fit(&unlabeled(&rows), 2).unwrap();
    let x = [0.3, -1.7];
    let y = [2.5, 0.4];
    let (a, b) = (1.5, -0.75);
    let mix: Vec<f64> = (0..2).map(|j| a * x[j] + b * y[j]).collect();
    let px = model.project_row(&x).unwrap();
    let py = model.project_row(&y).unwrap();
    let pm = model.project_row(&mix).unwrap();
    for c in 0..2 {
        assert!((pm[c] - (a * px[c] + b * py[c])).abs() <= 1e-9);
    }
}

fn matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (2usize..=6, 3usize..=40).prop_flat_map(|(d, n)| prop::collection::vec(prop::collection::vec(-50.0f64..50.0, d), n.max(d + 1)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn components_orthonormal_and_sorted(rows in matrix(), kf in 0.0f64..1.0) {
        let d = rows[0].len();
        let k = 1 + ((d - 1) as f64 * kf) as usize;
        let model = pca_fit(&unlabeled(&rows), k).unwrap();
        let comps = model.components();
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(&comps[i], &comps[j]) - want).abs() <= 1e-8);
            }
            let big = comps[i].iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            prop_assert!(big > 0.0);
        }
        prop_assert!(model.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(model.eigenvalues().iter().all(|&e| e >= -1e-10));
    }

    #[test]
    fn projections_match_oracle(rows in matrix()) {
        let k = rows[0].len().min(3);
        let data = unlabeled(&rows);
        let model = pca_fit(&data, k).unwrap();
        let (oracle, values, _) = oracle_projection(&rows, k);
        // Near-degenerate eigenvalues leave the eigenvectors undetermined.
        let gaps_ok = (0..k.min(values.len() - 1)).all(|c| (values[c] - values[c + 1]).abs() > 1e-4 * values[0].max(1.0));
        prop_assume!(gaps_ok);
        prop_assert!(max_diff_up_to_sign(&projections(&model, &data), &oracle) <= 1e-8);
    }
}
