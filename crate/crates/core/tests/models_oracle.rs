mod common;

use agrishare::data::DataMatrix;
use agrishare::models::{
    accuracy, logreg_loss_grad, mlp_loss_grad, mlp_train_local_traced, svm_objective, train_classifier, train_gnb,
    train_svm_traced, ClassifierKind, ClassifierParams, EncodedData, ModelParams, TrainConfig, GNB_DEFAULT_SMOOTHING,
};
use common::*;
use rand::Rng;

const H: f64 = 1e-5;

fn toy(seed: u64, n: usize, d: usize, classes: usize) -> (DataMatrix, Vec<String>) {
    let mut r = rng(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
    let labels: Vec<&str> = (0..n).map(|i| names[(i * 7 + i / 3) % classes].as_str()).collect();
    (labeled(&rows, &labels), names)
}

fn central_diff(f: impl Fn(&[f64]) -> f64, w: &[f64], j: usize) -> f64 {
    let mut p = w.to_vec();
    p[j] += H;
    let up = f(&p);
    p[j] -= 2.0 * H;
    (up - f(&p)) / (2.0 * H)
}

#[test]
fn logreg_gradient_matches_finite_differences() {
    let (data, classes) = toy(1, 40, 4, 3);
    let enc = EncodedData::new(&data, &classes, None).unwrap();
    let mut r = rng(2);
    let w: Vec<f64> = (0..3 * 5).map(|_| r.random_range(-0.5..0.5)).collect();
    let (_, grad) = logreg_loss_grad(&w, 3, &enc, 0.01);
    for _ in 0..20 {
        let j = r.random_range(0..w.len());
        let num = central_diff(|p| logreg_loss_grad(p, 3, &enc, 0.01).0, &w, j);
        assert!(rel_err(grad[j], num) <= 1e-4, "coordinate {j}: {} vs {num}", grad[j]);
    }
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    // Every weight of a tiny network, then a sample of a wider one.
    for (shape, coords) in [(vec![4, 2, 2], None), (vec![4, 6, 5, 3], Some(20))] {
        let classes = shape.last().copied().unwrap();
        let (data, names) = toy(3, 30, 4, classes);
        let enc = EncodedData::new(&data, &names, None).unwrap();
        let params = ModelParams::init(shape.clone(), 4).unwrap();
        let rows: Vec<usize> = (0..enc.n()).collect();
        let (_, grad) = mlp_loss_grad(&params, &enc, &rows, 0.05);
        let loss_at = |w: &[f64]| {
            let p = ModelParams::new(shape.clone(), w.to_vec()).unwrap();
            mlp_loss_grad(&p, &enc, &rows, 0.05).0
        };
        let mut r = rng(5);
        let picks: Vec<usize> = match coords {
            None => (0..params.weights.len()).collect(),
            Some(c) => (0..c).map(|_| r.random_range(0..params.weights.len())).collect(),
        };
        for j in picks {
            let num = central_diff(loss_at, &params.weights, j);
            assert!(rel_err(grad[j], num) <= 1e-4, "{shape:?} coordinate {j}: {} vs {num}", grad[j]);
        }
    }
}

#[test]
fn svm_objective_matches_direct_hinge() {
    let (data, classes) = toy(6, 50, 3, 3);
    let enc = EncodedData::new(&data, &classes, None).unwrap();
    let mut r = rng(7);
    let w: Vec<f64> = (0..3 * 4).map(|_| r.random_range(-1.0..1.0)).collect();
    let l2 = 0.02;
    let mut want = 0.0;
    for c in 0..3 {
        let wc = &w[c * 4..c * 4 + 4];
        let hinge: f64 = (0..enc.n())
            .map(|i| {
                let y = if enc.y[i] == c { 1.0 } else { -1.0 };
                (1.0 - y * (dot(&wc[..3], enc.row(i)) + wc[3])).max(0.0)
            })
            .sum();
        want += hinge / enc.n() as f64 + 0.5 * l2 * dot(&wc[..3], &wc[..3]);
    }
    assert!((svm_objective(&w, 3, &enc, l2) - want).abs() <= 1e-12);
    // Away from hinge kinks the subgradient is the gradient.
    let mut grad = [0.0; 12];
    for c in 0..3 {
        let wc = &w[c * 4..c * 4 + 4];
        for i in 0..enc.n() {
            let y = if enc.y[i] == c { 1.0 } else { -1.0 };
            let m = y * (dot(&wc[..3], enc.row(i)) + wc[3]);
            assert!((m - 1.0).abs() > 1e-4, "kink too close for a finite difference");
            if m < 1.0 {
                for j in 0..3 {
                    grad[c * 4 + j] -= y * enc.row(i)[j] / enc.n() as f64;
                }
                grad[c * 4 + 3] -= y / enc.n() as f64;
            }
        }
        for j in 0..3 {
            grad[c * 4 + j] += l2 * wc[j];
        }
    }
    for _ in 0..20 {
        let j = r.random_range(0..12);
        let num = central_diff(|p| svm_objective(p, 3, &enc, l2), &w, j);
        assert!(rel_err(grad[j], num) <= 1e-4, "coordinate {j}: {} vs {num}", grad[j]);
    }
}

#[test]
fn svm_training_lowers_the_objective() {
    let data = crop();
    let cfg = TrainConfig { epochs: 60, ..TrainConfig::svm_default() };
    let (_, trace) = train_svm_traced(&data, &cfg).unwrap();
    let first = trace[0];
    let last = *trace.last().unwrap();
    let best = trace.iter().copied().fold(f64::INFINITY, f64::min);
    assert!(last < first, "{first} -> {last}");
    // The decaying step keeps the tail close to the best objective seen.
    assert!(last <= best * 1.10, "last {last}, best {best}");
}

#[test]
fn gnb_moments_match_two_pass() {
    let data = crop();
    let model = train_gnb(&data, GNB_DEFAULT_SMOOTHING).unwrap();
    let ClassifierParams::Gnb { means, variances, log_priors } = &model.params else { panic!("not gnb") };
    let labels = data.require_labels().unwrap();
    let d = data.n_features();
    for (ci, class) in model.classes.iter().enumerate() {
        let idx: Vec<usize> = (0..data.n_rows()).filter(|&i| &labels[i] == class).collect();
        for j in 0..d {
            let col: Vec<f64> = idx.iter().map(|&i| data.row(i)[j]).collect();
            let (m, s) = two_pass(&col);
            assert!((means[ci * d + j] - m).abs() <= 1e-9 * m.abs().max(1.0));
            assert!((variances[ci * d + j] - s * s).abs() <= 1e-9 * (s * s).max(1.0));
        }
        assert!((log_priors[ci] - (idx.len() as f64 / data.n_rows() as f64).ln()).abs() <= 1e-12);
    }
}

#[test]
fn batch_prediction_matches_single_rows() {
    let data = crop();
    for kind in ClassifierKind::ALL {
        let model = train_classifier(kind, &data, 1).unwrap();
        let all = model.predict(&data).unwrap();
        for i in (0..data.n_rows()).step_by(37) {
            let one = data.select(&[i]);
            assert_eq!(model.predict(&one).unwrap()[0], all[i], "{kind} row {i}");
        }
    }
}

#[test]
fn fitted_models_separate_crops() {
    let data = crop();
    for kind in ClassifierKind::ALL {
        let model = train_classifier(kind, &data, 0).unwrap();
        let acc = accuracy(&model, &data).unwrap();
        assert!(acc >= 0.85, "{kind} training accuracy {acc}");
    }
}

#[test]
fn mlp_loss_decreases() {
    let data = crop();
    let classes = data.classes().unwrap();
    let p = agrishare::data::fit_standardizer(&data).unwrap();
    let enc = EncodedData::new(&data, &classes, Some(&p)).unwrap();
    let init = ModelParams::init(vec![7, 32, classes.len()], 9).unwrap();
    let cfg = TrainConfig { epochs: 10, ..TrainConfig::mlp_default() };
    let (_, trace) = mlp_train_local_traced(&init, &enc, &cfg).unwrap();
    assert!(trace.windows(2).filter(|w| w[1] > w[0]).count() <= 1, "{trace:?}");
    assert!(trace[9] < 0.5 * trace[0], "{trace:?}");
}

#[test]
fn random_labels_give_chance_accuracy() {
    let mut r = rng(11);
    let mut sample = |n: usize| {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..5).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let labels: Vec<&str> = (0..n).map(|_| if r.random_bool(0.5) { "a" } else { "b" }).collect();
        labeled(&rows, &labels)
    };
    let train = sample(1000);
    let test = sample(20_000);
    for kind in ClassifierKind::ALL {
        let model = train_classifier(kind, &train, 2).unwrap();
        let acc = accuracy(&model, &test).unwrap();
        assert!((acc - 0.5).abs() <= 0.02, "{kind} accuracy {acc}");
    }
}

#[test]
fn argmax_ignores_positive_rescaling() {
    let data = crop();
    for kind in [ClassifierKind::Logreg, ClassifierKind::Svm] {
        let model = train_classifier(kind, &data, 3).unwrap();
        let mut scaled = model.clone();
        match &mut scaled.params {
            ClassifierParams::Logreg { weights } | ClassifierParams::Svm { weights } => weights.iter_mut().for_each(|w| *w *= 3.7),
            ClassifierParams::Gnb { .. } => unreachable!(),
        }
        assert_eq!(model.predict_indices(&data).unwrap(), scaled.predict_indices(&data).unwrap(), "{kind}");
    }
}

#[test]
fn training_is_deterministic() {
    let data = crop();
    for kind in ClassifierKind::ALL {
        assert_eq!(train_classifier(kind, &data, 5).unwrap(), train_classifier(kind, &data, 5).unwrap(), "{kind}");
    }
    let a = train_classifier(ClassifierKind::Logreg, &data, 5).unwrap();
    let b = train_classifier(ClassifierKind::Logreg, &data, 6).unwrap();
    assert_ne!(a, b);
}
