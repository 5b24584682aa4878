use serde::{Deserialize, Serialize};

use super::lbfgs::minimize;
use super::{Dataset, Standardizer};
use crate::{Real, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogRegConfig {
    /// Penalty `l2/2 * |W|^2`; biases are not penalized.
    pub l2: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            l2: 1.0,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

/// Multinomial logistic regression on standardized features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub scaler: Standardizer,
    /// `k x d`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Summed cross-entropy plus `l2/2 * |W|^2` and its gradient. `params` holds
/// the `k x d` weights followed by `k` biases; `x` is row-major `n x d`.
pub fn softmax_loss_gradient(params: &[f64], x: &[f64], y: &[usize], d: usize, k: usize, l2: f64) -> (f64, Vec<f64>) {
    let (w, b) = params.split_at(k * d);
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    let mut z = vec![0.0; k];
    for (row, &yi) in x.chunks_exact(d).zip(y) {
        for c in 0..k {
            z[c] = b[c] + row.iter().zip(&w[c * d..(c + 1) * d]).map(|(a, b)| a * b).sum::<f64>();
        }
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        loss += lse - z[yi];
        for c in 0..k {
            let r = (z[c] - lse).exp() - if c == yi { 1.0 } else { 0.0 };
            for (g, a) in grad[c * d..(c + 1) * d].iter_mut().zip(row) {
                *g += r * a;
            }
            grad[k * d + c] += r;
        }
    }
    for (g, wi) in grad[..k * d].iter_mut().zip(w) {
        *g += l2 * wi;
    }
    loss += 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>();
    (loss, grad)
}

impl LogisticRegression {
    pub fn fit<T: Real>(data: &Dataset<T>, cfg: &LogRegConfig) -> Result<Self> {
        let (n, d, k) = (data.len(), data.dim(), data.num_classes());
        let raw = data.features_f64();
        let scaler = Standardizer::fit(&raw, n, d);
        let x = scaler.apply_all(&raw, d);
        let y = data.labels();
        let out = minimize(
            |p| softmax_loss_gradient(p, &x, y, d, k, cfg.l2),
            vec![0.0; k * d + k],
            cfg.max_iter,
            cfg.tol,
            10,
        );
        if !out.converged {
            log::debug!(
                "logreg stopped after {} iterations with gradient norm {:.3e}",
                out.iterations,
                out.grad_norm
            );
        }
        let mut weights = out.x;
        let mut bias = weights.split_off(k * d);
        // softmax is invariant to a common bias shift
        let mean = bias.iter().sum::<f64>() / k as f64;
        bias.iter_mut().for_each(|b| *b -= mean);
        Ok(LogisticRegression {
            scaler,
            weights,
            bias,
            iterations: out.iterations,
            converged: out.converged,
            grad_norm: out.grad_norm,
        })
    }

    pub fn scores<T: Real>(&self, x: &[T]) -> Vec<f64> {
        let z = self.scaler.apply(x);
        let d = z.len();
        self.bias
            .iter()
            .enumerate()
            .map(|(c, b)| b + z.iter().zip(&self.weights[c * d..(c + 1) * d]).map(|(a, w)| a * w).sum::<f64>())
            .collect()
    }
}
