use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::Real;

/// Relative variance floor: a multiple of the largest feature variance.
pub const VAR_SMOOTHING: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianNb {
    /// `k x d` per-class feature means.
    pub means: Vec<f64>,
    /// `k x d` per-class variances, floored.
    pub variances: Vec<f64>,
    /// Log class priors; `None` for classes absent from training.
    pub log_priors: Vec<Option<f64>>,
}

impl GaussianNb {
    pub fn fit<T: Real>(data: &Dataset<T>) -> Self {
        let (n, d, k) = (data.len(), data.dim(), data.num_classes());
        let x = data.features_f64();
        let counts = data.class_counts();
        let mut means = vec![0.0; k * d];
        for (row, &c) in x.chunks_exact(d).zip(data.labels()) {
            for (m, v) in means[c * d..(c + 1) * d].iter_mut().zip(row) {
                *m += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                means[c * d..(c + 1) * d].iter_mut().for_each(|m| *m /= counts[c] as f64);
            }
        }
        let mut variances = vec![0.0; k * d];
        for (row, &c) in x.chunks_exact(d).zip(data.labels()) {
            for ((s, v), m) in variances[c * d..(c + 1) * d].iter_mut().zip(row).zip(&means[c * d..(c + 1) * d]) {
                *s += (v - m) * (v - m);
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                variances[c * d..(c + 1) * d].iter_mut().for_each(|s| *s /= counts[c] as f64);
            }
        }
        // floor relative to the largest overall feature variance
        let mut max_var: f64 = 0.0;
        for j in 0..d {
            let mean = x.chunks_exact(d).map(|r| r[j]).sum::<f64>() / n as f64;
            let var = x.chunks_exact(d).map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n as f64;
            max_var = max_var.max(var);
        }
        let floor = if max_var > 0.0 { VAR_SMOOTHING * max_var } else { VAR_SMOOTHING };
        variances.iter_mut().for_each(|v| *v += floor);
        let log_priors = counts
            .iter()
            .map(|&c| (c > 0).then(|| (c as f64 / n as f64).ln()))
            .collect();
        GaussianNb {
            means,
            variances,
            log_priors,
        }
    }

    /// `log P(c) + log P(x | c)` per class; absent classes get `-inf`.
    pub fn joint_log_likelihood<T: Real>(&self, x: &[T]) -> Vec<f64> {
        let d = x.len();
        self.log_priors
            .iter()
            .enumerate()
            .map(|(c, lp)| match lp {
                None => f64::NEG_INFINITY,
                Some(lp) => {
                    let mut s = *lp;
                    for j in 0..d {
                        let v = self.variances[c * d + j];
                        let diff = x[j].as_f64() - self.means[c * d + j];
                        s -= 0.5 * (2.0 * std::f64::consts::PI * v).ln() + diff * diff / (2.0 * v);
                    }
                    s
                }
            })
            .collect()
    }
}
