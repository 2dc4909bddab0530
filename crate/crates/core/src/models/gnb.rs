use super::{class_list, ClassifierModel, ClassifierParams, MODEL_FORMAT_VERSION};
use crate::data::DataMatrix;
use crate::error::{Error, Result};

pub const GNB_DEFAULT_SMOOTHING: f64 = 1e-9;

/// Per-class feature means and population variances, with every variance
/// floored at `smoothing · (largest feature variance)`, plus log priors.
pub fn train_gnb(data: &DataMatrix, smoothing: f64) -> Result<ClassifierModel> {
    if !(smoothing > 0.0) {
        return Err(Error::invalid("smoothing must be positive"));
    }
    let classes = class_list(data)?;
    let labels = data.require_labels()?;
    let d = data.n_features();
    let c = classes.len();
    let idx: Vec<usize> = labels.iter().map(|l| classes.binary_search(l).expect("class list from labels")).collect();
    let mut counts = vec![0usize; c];
    for &i in &idx {
        counts[i] += 1;
    }
    if let Some(ci) = counts.iter().position(|&n| n < 2) {
        return Err(Error::insufficient(format!("class {:?} has fewer than 2 samples", classes[ci])));
    }

    let mut means = vec![0.0; c * d];
    for (row, &ci) in data.rows().zip(&idx) {
        for j in 0..d {
            means[ci * d + j] += row[j];
        }
    }
    for ci in 0..c {
        for j in 0..d {
            means[ci * d + j] /= counts[ci] as f64;
        }
    }
    let mut variances = vec![0.0; c * d];
    for (row, &ci) in data.rows().zip(&idx) {
        for j in 0..d {
            variances[ci * d + j] += (row[j] - means[ci * d + j]).powi(2);
        }
    }
    for ci in 0..c {
        for j in 0..d {
            variances[ci * d + j] /= counts[ci] as f64;
        }
    }

    let n = data.n_rows() as f64;
    let max_var = (0..d)
        .map(|j| {
            let col = data.column(j);
            let m = col.iter().sum::<f64>() / n;
            col.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
        })
        .fold(0.0, f64::max);
    let floor = (smoothing * max_var).max(f64::MIN_POSITIVE);
    variances.iter_mut().for_each(|v| *v = v.max(floor));
    let log_priors = counts.iter().map(|&k| (k as f64 / n).ln()).collect();

    Ok(ClassifierModel {
        version: MODEL_FORMAT_VERSION,
        classes,
        n_features: d,
        standardizer: None,
        params: ClassifierParams::Gnb { means, variances, log_priors },
    })
}

pub(crate) fn joint_log_likelihood(means: &[f64], variances: &[f64], log_priors: &[f64], d: usize, x: &[f64]) -> Vec<f64> {
    const LN_2PI: f64 = 1.837_877_066_409_345_3;
    log_priors
        .iter()
        .enumerate()
        .map(|(c, lp)| {
            let mut ll = *lp;
            for j in 0..d {
                let v = variances[c * d + j];
                ll -= 0.5 * (LN_2PI + v.ln() + (x[j] - means[c * d + j]).powi(2) / v);
            }
            ll
        })
        .collect()
}
