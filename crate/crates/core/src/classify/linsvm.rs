use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, Standardizer};
use crate::{rng, Real, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            epochs: 50,
            seed: 0,
        }
    }
}

/// One-vs-rest linear SVM trained by Pegasos subgradient steps with iterate
/// averaging. The bias is an extra always-one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub scaler: Standardizer,
    /// `k x d`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    /// Per class, the hinge objective of the retained iterate after each epoch.
    pub objective_trace: Vec<Vec<f64>>,
}

fn objective(w: &[f64], x: &[f64], signs: &[f64], d: usize, lambda: f64) -> f64 {
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = x
        .chunks_exact(d)
        .zip(signs)
        .map(|(row, s)| {
            let m = s * (w[d] + row.iter().zip(w).map(|(a, b)| a * b).sum::<f64>());
            (1.0 - m).max(0.0)
        })
        .sum();
    reg + hinge / signs.len() as f64
}

impl LinearSvm {
    pub fn fit<T: Real>(data: &Dataset<T>, cfg: &SvmConfig) -> Result<Self> {
        if !(cfg.c > 0.0) || cfg.epochs == 0 {
            return Err(crate::Error::config("svm needs c > 0 and epochs >= 1"));
        }
        let (n, d, k) = (data.len(), data.dim(), data.num_classes());
        let raw = data.features_f64();
        let scaler = Standardizer::fit(&raw, n, d);
        let x = scaler.apply_all(&raw, d);
        let lambda = 1.0 / (cfg.c * n as f64);
        let orders: Vec<Vec<usize>> = (0..cfg.epochs)
            .map(|e| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.shuffle(&mut rng::stream(cfg.seed, &[0x5E7, e as u64]));
                idx
            })
            .collect();
        let mut weights = vec![0.0; k * d];
        let mut bias = vec![0.0; k];
        let mut objective_trace = Vec::with_capacity(k);
        for c in 0..k {
            let signs: Vec<f64> = data.labels().iter().map(|&y| if y == c { 1.0 } else { -1.0 }).collect();
            let mut w = vec![0.0; d + 1];
            let mut avg = vec![0.0; d + 1];
            let mut retained = vec![0.0; d + 1];
            let mut best = objective(&retained, &x, &signs, d, lambda);
            let mut trace = Vec::with_capacity(cfg.epochs);
            let mut t = 0usize;
            for order in &orders {
                for &i in order {
                    t += 1;
                    let eta = 1.0 / (lambda * t as f64);
                    let row = &x[i * d..(i + 1) * d];
                    let margin = signs[i] * (w[d] + row.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>());
                    let shrink = 1.0 - eta * lambda;
                    w.iter_mut().for_each(|v| *v *= shrink);
                    if margin < 1.0 {
                        for (wj, a) in w.iter_mut().zip(row) {
                            *wj += eta * signs[i] * a;
                        }
                        w[d] += eta * signs[i];
                    }
                    let tf = t as f64;
                    for (a, v) in avg.iter_mut().zip(&w) {
                        *a += (v - *a) / tf;
                    }
                }
                let obj = objective(&avg, &x, &signs, d, lambda);
                if obj <= best {
                    best = obj;
                    retained.copy_from_slice(&avg);
                }
                trace.push(best);
            }
            weights[c * d..(c + 1) * d].copy_from_slice(&retained[..d]);
            bias[c] = retained[d];
            objective_trace.push(trace);
        }
        Ok(LinearSvm {
            scaler,
            weights,
            bias,
            objective_trace,
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

#[cfg(test)]
mod tests {
    use super::super::{train_linsvm, ModelParams};
    use super::*;
    use rand::Rng;

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    fn toy(scale: f64) -> Dataset<f64> {
        let mut r = rng::stream(11, &[]);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..30 {
            let c = i % 2;
            let s = if c == 0 { 4.0 } else { -4.0 };
            x.push(scale * (s + r.gen_range(-1.0..1.0)));
            x.push(scale * (s + r.gen_range(-1.0..1.0)));
            y.push(c);
        }
        Dataset::new(x, 2, y, names()).unwrap()
    }

    #[test]
    fn separable_training_accuracy() {
        let d = toy(1.0);
        let m = train_linsvm(&d, &SvmConfig::default()).unwrap();
        assert_eq!(m.accuracy(&d), 1.0);
    }

    #[test]
    fn retained_objective_never_increases() {
        let m = train_linsvm(&toy(1.0), &SvmConfig::default()).unwrap();
        let ModelParams::LinSvm(s) = &m.params else { panic!() };
        for tr in &s.objective_trace {
            assert!(tr.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn feature_scaling_leaves_predictions() {
        let a = train_linsvm(&toy(1.0), &SvmConfig::default()).unwrap();
        let b = train_linsvm(&toy(10.0), &SvmConfig::default()).unwrap();
        for i in -10..=10 {
            for j in -10..=10 {
                let p = [i as f64 * 0.8, j as f64 * 0.8];
                assert_eq!(a.predict(&p), b.predict(&[p[0] * 10.0, p[1] * 10.0]));
            }
        }
    }

    #[test]
    fn two_points_split_at_bisector() {
        let d = Dataset::new(vec![0.0f64, 0.0, 2.0, 2.0], 2, vec![0, 1], names()).unwrap();
        let m = train_linsvm(&d, &SvmConfig::default()).unwrap();
        let ModelParams::LinSvm(s) = &m.params else { panic!() };
        // score difference along the segment between the points
        let diff = |t: f64| {
            let sc = s.scores(&[2.0 * t, 2.0 * t]);
            sc[1] - sc[0]
        };
        let (a, b) = (diff(0.0), diff(1.0));
        assert!(a < 0.0 && b > 0.0);
        let root = a / (a - b);
        assert!((root - 0.5).abs() < 0.05, "crossing at {root}");
        // normal parallel to the segment
        let w1 = &s.weights[2..4];
        assert!((w1[0] - w1[1]).abs() < 0.05 * w1[0].abs());
    }
}
