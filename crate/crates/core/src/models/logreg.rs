use rand::Rng;

use super::{class_list, epoch_batches, fitted_standardizer, softmax, ClassifierModel, ClassifierParams, EncodedData, TrainConfig, MODEL_FORMAT_VERSION};
use crate::data::DataMatrix;
use crate::error::Result;
use crate::rng::seeded;

/// Mean cross-entropy plus `l2/2 · ‖W‖²` (biases unpenalized) and its
/// gradient. `weights` is C × (d+1), bias last.
pub fn logreg_loss_grad(weights: &[f64], n_classes: usize, data: &EncodedData, l2: f64) -> (f64, Vec<f64>) {
    let rows: Vec<usize> = (0..data.n()).collect();
    loss_grad_rows(weights, n_classes, data, &rows, l2)
}

fn loss_grad_rows(weights: &[f64], n_classes: usize, data: &EncodedData, rows: &[usize], l2: f64) -> (f64, Vec<f64>) {
    let d = data.d;
    let stride = d + 1;
    let n = rows.len() as f64;
    let mut grad = vec![0.0; weights.len()];
    let mut loss = 0.0;
    let mut z = vec![0.0; n_classes];
    for &i in rows {
        let x = data.row(i);
        for (c, zc) in z.iter_mut().enumerate() {
            let w = &weights[c * stride..(c + 1) * stride];
            *zc = w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d];
        }
        let p = softmax(&z);
        let y = data.y[i];
        loss -= p[y].max(1e-300).ln();
        for c in 0..n_classes {
            let r = p[c] - if c == y { 1.0 } else { 0.0 };
            let g = &mut grad[c * stride..(c + 1) * stride];
            for j in 0..d {
                g[j] += r * x[j];
            }
            g[d] += r;
        }
    }
    loss /= n;
    grad.iter_mut().for_each(|g| *g /= n);
    for c in 0..n_classes {
        for j in 0..d {
            let w = weights[c * stride + j];
            loss += 0.5 * l2 * w * w;
            grad[c * stride + j] += l2 * w;
        }
    }
    (loss, grad)
}

/// Multinomial logistic regression by mini-batch gradient descent on
/// standardized inputs.
pub fn train_logreg(data: &DataMatrix, cfg: &TrainConfig) -> Result<ClassifierModel> {
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
    for e in 0..cfg.epochs {
        for rows in epoch_batches(enc.n(), cfg, e).chunks(cfg.batch_size.min(enc.n())) {
            let (_, grad) = loss_grad_rows(&weights, c, &enc, rows, cfg.l2);
            for (w, g) in weights.iter_mut().zip(&grad) {
                *w -= cfg.learning_rate * g;
            }
        }
    }
    Ok(ClassifierModel {
        version: MODEL_FORMAT_VERSION,
        classes,
        n_features: d,
        standardizer: Some(standardizer),
        params: ClassifierParams::Logreg { weights },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FeatureSchema;
    use crate::models::accuracy;

    fn separable() -> DataMatrix {
        let schema = FeatureSchema::new(["x", "y"], Some("c")).unwrap();
        let mut v = Vec::new();
        let mut l = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.1;
            v.extend([t, 1.0 + t]);
            l.push("above".to_string());
            v.extend([t, -1.0 + t]);
            l.push("below".to_string());
        }
        DataMatrix::new(schema, v, Some(l)).unwrap()
    }

    #[test]
    fn separable_reaches_full_accuracy() {
        let m = train_logreg(&separable(), &TrainConfig::logreg_default()).unwrap();
        assert_eq!(accuracy(&m, &separable()).unwrap(), 1.0);
        for row in m.scores(&separable()).unwrap() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn single_class_rejected() {
        let schema = FeatureSchema::new(["x"], Some("c")).unwrap();
        let d = DataMatrix::new(schema, vec![1.0, 2.0], Some(vec!["a".into(), "a".into()])).unwrap();
        assert!(train_logreg(&d, &TrainConfig::logreg_default()).is_err());
    }

    #[test]
    fn deterministic() {
        let cfg = TrainConfig { epochs: 20, ..TrainConfig::logreg_default() };
        assert_eq!(train_logreg(&separable(), &cfg).unwrap(), train_logreg(&separable(), &cfg).unwrap());
    }
}
