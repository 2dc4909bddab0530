use rand::Rng;

use super::{class_list, epoch_batches, fitted_standardizer, ClassifierModel, ClassifierParams, EncodedData, TrainConfig, MODEL_FORMAT_VERSION};
use crate::data::DataMatrix;
use crate::error::Result;
use crate::rng::seeded;

/// Epoch count over which the step size halves.
const STEP_DECAY_EPOCHS: f64 = 50.0;

fn step_size(lr: f64, epoch: usize) -> f64 {
    lr * STEP_DECAY_EPOCHS / (STEP_DECAY_EPOCHS + epoch as f64)
}

/// Sum over one-vs-rest problems of `l2/2 · ‖w‖² + mean hinge loss`.
pub fn svm_objective(weights: &[f64], n_classes: usize, data: &EncodedData, l2: f64) -> f64 {
    let d = data.d;
    let n = data.n() as f64;
    let mut total = 0.0;
    for c in 0..n_classes {
        let w = &weights[c * (d + 1)..(c + 1) * (d + 1)];
        let mut hinge = 0.0;
        for i in 0..data.n() {
            let y = if data.y[i] == c { 1.0 } else { -1.0 };
            let m = y * (w[..d].iter().zip(data.row(i)).map(|(a, b)| a * b).sum::<f64>() + w[d]);
            hinge += (1.0 - m).max(0.0);
        }
        total += hinge / n + 0.5 * l2 * w[..d].iter().map(|v| v * v).sum::<f64>();
    }
    total
}

/// Like [`train_svm`], also returning the objective after each epoch.
pub fn train_svm_traced(data: &DataMatrix, cfg: &TrainConfig) -> Result<(ClassifierModel, Vec<f64>)> {
    cfg.validate()?;
    let classes = class_list(data)?;
    let standardizer = fitted_standardizer(data)?;
    let enc = EncodedData::new(data, &classes, Some(&standardizer))?;
    let c = classes.len();
    let d = enc.d;
    let mut rng = seeded(cfg.seed);
    let mut weights: Vec<f64> = (0..c * (d + 1))
        .map(|i| if i % (d + 1) == d { 0.0 } else { rng.random_range(-0.01..0.01) })
        .collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut grad = vec![0.0; d + 1];
    let batch = cfg.batch_size.min(enc.n());
    for epoch in 0..cfg.epochs {
        let eta = step_size(cfg.learning_rate, epoch);
        for rows in epoch_batches(enc.n(), cfg, epoch).chunks(batch) {
            let m = rows.len() as f64;
            for cls in 0..c {
                let w = &mut weights[cls * (d + 1)..(cls + 1) * (d + 1)];
                grad.iter_mut().for_each(|g| *g = 0.0);
                for &i in rows {
                    let x = enc.row(i);
                    let y = if enc.y[i] == cls { 1.0 } else { -1.0 };
                    let margin = y * (w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]);
                    if margin < 1.0 {
                        for j in 0..d {
                            grad[j] -= y * x[j];
                        }
                        grad[d] -= y;
                    }
                }
                for j in 0..d {
                    w[j] -= eta * (grad[j] / m + cfg.l2 * w[j]);
                }
                w[d] -= eta * grad[d] / m;
            }
        }
        trace.push(svm_objective(&weights, c, &enc, cfg.l2));
    }
    let model = ClassifierModel {
        version: MODEL_FORMAT_VERSION,
        classes,
        n_features: d,
        standardizer: Some(standardizer),
        params: ClassifierParams::Svm { weights },
    };
    Ok((model, trace))
}

/// One-vs-rest linear SVMs by mini-batch subgradient descent on hinge loss
/// plus L2, with a decaying step size.
pub fn train_svm(data: &DataMatrix, cfg: &TrainConfig) -> Result<ClassifierModel> {
    Ok(train_svm_traced(data, cfg)?.0)
}
