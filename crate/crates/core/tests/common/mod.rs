//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use agrishare::data::{DataMatrix, FeatureSchema};
use agrishare::ldp::laplace_sample;
use agrishare::rng::seeded_stream;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// The 2200-row, 22-crop dataset every crop test runs on.
pub fn crop() -> DataMatrix {
    agrishare::data::generate_synthetic_crop(100, 2024).unwrap()
}

pub fn unlabeled(rows: &[Vec<f64>]) -> DataMatrix {
    let d = rows[0].len();
    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    DataMatrix::from_rows(FeatureSchema::new(names, None).unwrap(), rows, None).unwrap()
}

pub fn labeled(rows: &[Vec<f64>], labels: &[&str]) -> DataMatrix {
    let d = rows[0].len();
    let names: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let labels = labels.iter().map(|s| s.to_string()).collect();
    DataMatrix::from_rows(FeatureSchema::new(names, Some("label")).unwrap(), rows, Some(labels)).unwrap()
}

pub fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    // Columns get different scales and some correlation so the spectrum is spread.
    let mix: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            (0..d)
                .map(|j| (j as f64 + 1.0) * (0..d).map(|i| mix[j][i] * z[i]).sum::<f64>() + 3.0 * j as f64)
                .collect()
        })
        .collect()
}

/// Two-pass column mean and population standard deviation.
pub fn two_pass(col: &[f64]) -> (f64, f64) {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Cyclic Jacobi eigensolver for a dense symmetric matrix. Eigenpairs sorted by
/// descending eigenvalue; eigenvectors returned as rows.
pub fn jacobi_eigen(a: &[Vec<f64>], tol: f64) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut a: Vec<Vec<f64>> = a.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let scale: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum::<f64>().max(1e-300);
        if off.sqrt() <= tol * scale.sqrt() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|k| v[k][i]).collect()).collect();
    (values, vectors)
}

/// Standardize with population SD (scale 1 on constant columns).
pub fn standardize(rows: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let mut means = Vec::new();
    let mut scales = Vec::new();
    for j in 0..d {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        let (m, s) = two_pass(&col);
        means.push(m);
        scales.push(if s > 0.0 { s } else { 1.0 });
    }
    let z = rows.iter().map(|r| (0..d).map(|j| (r[j] - means[j]) / scales[j]).collect()).collect();
    (z, means, scales)
}

/// Sample covariance, 1/(n−1).
pub fn covariance(z: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = z[0].len();
    let n = z.len() as f64;
    let mu: Vec<f64> = (0..d).map(|j| z.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    (0..d)
        .map(|i| (0..d).map(|j| z.iter().map(|r| (r[i] - mu[i]) * (r[j] - mu[j])).sum::<f64>() / (n - 1.0)).collect())
        .collect()
}

/// Projection of `rows` onto the top-k Jacobi eigenvectors of the standardized covariance.
pub fn oracle_projection(rows: &[Vec<f64>], k: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    let (z, _, _) = standardize(rows);
    let (values, vectors) = jacobi_eigen(&covariance(&z), 1e-12);
    let proj = z.iter().map(|r| (0..k).map(|c| dot(r, &vectors[c])).collect()).collect();
    (proj, values, vectors)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Largest |a − b| after aligning each column's sign.
pub fn max_diff_up_to_sign(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let k = a[0].len();
    (0..k)
        .map(|c| {
            let plus = a.iter().zip(b).map(|(x, y)| (x[c] - y[c]).abs()).fold(0.0, f64::max);
            let minus = a.iter().zip(b).map(|(x, y)| (x[c] + y[c]).abs()).fold(0.0, f64::max);
            plus.min(minus)
        })
        .fold(0.0, f64::max)
}

/// Relative error used by the finite-difference checks.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Exhaustive k-means: the assignment of `points` to `c` non-empty groups with
/// the smallest within-cluster sum of squares, with its cost.
pub fn best_partition(points: &[[f64; 2]], c: usize) -> (Vec<usize>, f64) {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = (labels.clone(), f64::INFINITY);
    // Restricted-growth strings enumerate each partition once.
    fn rec(i: usize, used: usize, c: usize, pts: &[[f64; 2]], labels: &mut Vec<usize>, best: &mut (Vec<usize>, f64)) {
        if i == pts.len() {
            if used == c {
                let cost = partition_cost(pts, labels, c);
                if cost < best.1 {
                    *best = (labels.clone(), cost);
                }
            }
            return;
        }
        if c - used > pts.len() - i {
            return;
        }
        for l in 0..(used + 1).min(c) {
            labels[i] = l;
            rec(i + 1, used.max(l + 1), c, pts, labels, best);
        }
    }
    rec(0, 0, c, points, &mut labels, &mut best);
    best
}

pub fn partition_cost(points: &[[f64; 2]], labels: &[usize], c: usize) -> f64 {
    let mut sum = vec![[0.0; 2]; c];
    let mut count = vec![0.0; c];
    for (p, &l) in points.iter().zip(labels) {
        sum[l][0] += p[0];
        sum[l][1] += p[1];
        count[l] += 1.0;
    }
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| {
            let m = [sum[l][0] / count[l], sum[l][1] / count[l]];
            (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2)
        })
        .sum()
}

/// Same partition up to relabelling.
pub fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let n = a.len();
    (0..n).all(|i| (0..n).all(|j| (a[i] == a[j]) == (b[i] == b[j])))
}

pub const DRAWS: usize = 1_000_000;

/// Laplace CDF, for expected bin counts.
pub fn cdf(x: f64, mu: f64, b: f64) -> f64 {
    let z = (x - mu) / b;
    if z < 0.0 {
        0.5 * z.exp()
    } else {
        1.0 - 0.5 * (-z).exp()
    }
}

/// Histogram x + Lap(s/ε) for two inputs at distance s and check every
/// well-populated bin against the e^ε bound with sampling slack. Returns the
/// number of bins checked and the worst ratio / bound.
pub fn binned_ratio_test(epsilon: f64, seed: u64) -> (usize, f64) {
    let s = 1.0;
    let b = s / epsilon;
    let (a1, a2) = (0.0, s);
    let width = b / 4.0;
    let lo = a1 - 12.0 * b;
    let bins = ((a2 + 12.0 * b - lo) / width).ceil() as usize;
    let mut h1 = vec![0usize; bins];
    let mut h2 = vec![0usize; bins];
    let mut r1 = seeded_stream(seed, 0);
    let mut r2 = seeded_stream(seed, 1);
    for (h, a, r) in [(&mut h1, a1, &mut r1), (&mut h2, a2, &mut r2)] {
        for _ in 0..DRAWS {
            let x = a + laplace_sample(b, r);
            let i = ((x - lo) / width).floor();
            if i >= 0.0 && (i as usize) < bins {
                h[i as usize] += 1;
            }
        }
    }
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for i in 0..bins {
        let (x0, x1) = (lo + i as f64 * width, lo + (i + 1) as f64 * width);
        let e1 = DRAWS as f64 * (cdf(x1, a1, b) - cdf(x0, a1, b));
        let e2 = DRAWS as f64 * (cdf(x1, a2, b) - cdf(x0, a2, b));
        if e1.min(e2) < 500.0 {
            continue;
        }
        let (c1, c2) = (h1[i] as f64, h2[i] as f64);
        let min_count = c1.min(c2);
        let bound = epsilon.exp() * (1.0 + 5.0 / min_count.sqrt());
        let ratio = (c1 / c2).max(c2 / c1);
        checked += 1;
        worst = worst.max(ratio / bound);
    }
    (checked, worst)
}
