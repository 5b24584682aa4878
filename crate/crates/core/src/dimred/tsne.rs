//! Exact t-SNE: Gaussian input affinities calibrated per point to a target
//! perplexity, Student-t output affinities, and momentum gradient descent on
//! the KL divergence with early exaggeration and adaptive gains.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::scalar::sq_dist;
use crate::{rng, Error, Real, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub out_dim: usize,
    /// Record the KL divergence after every iteration.
    pub trace: bool,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            learning_rate: 200.0,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            out_dim: 2,
            trace: false,
            seed: 0,
        }
    }
}

/// Per-point conditional distributions `p_{j|i}` (row-major `n x n`).
#[derive(Clone, Debug)]
pub struct Calibration<T> {
    pub conditional: Vec<T>,
    pub betas: Vec<T>,
    /// Entropy of each row in bits; the target is `log2(perplexity)`.
    pub entropies: Vec<f64>,
}

/// Binary-search each point's Gaussian precision so that its conditional
/// distribution has perplexity `perplexity`.
pub fn calibrate_affinities<T: Real>(x: &[T], n: usize, d: usize, perplexity: f64) -> Result<Calibration<T>> {
    if x.len() != n * d {
        return Err(Error::data("matrix shape does not match data length"));
    }
    let target = T::lit(perplexity.ln());
    let mut conditional = vec![T::zero(); n * n];
    let mut betas = vec![T::one(); n];
    let mut entropies = vec![0.0; n];
    let mut dist = vec![T::zero(); n];
    for i in 0..n {
        let xi = &x[i * d..(i + 1) * d];
        for j in 0..n {
            dist[j] = if i == j { T::zero() } else { sq_dist(xi, &x[j * d..(j + 1) * d]) };
        }
        let dmin = (0..n)
            .filter(|&j| j != i)
            .map(|j| dist[j])
            .fold(T::infinity(), T::min);
        let row = &mut conditional[i * n..(i + 1) * n];
        let entropy_at = |beta: T, row: &mut [T]| -> T {
            let mut sum = T::zero();
            let mut weighted = T::zero();
            for j in 0..n {
                if j == i {
                    row[j] = T::zero();
                    continue;
                }
                let dj = dist[j] - dmin;
                let p = (-beta * dj).exp();
                row[j] = p;
                sum += p;
                weighted += dj * p;
            }
            for p in row.iter_mut() {
                *p /= sum;
            }
            sum.ln() + beta * weighted / sum
        };
        let (mut lo, mut hi) = (T::zero(), T::infinity());
        let mut beta = T::one();
        let mut h = entropy_at(beta, row);
        for _ in 0..200 {
            let diff = h - target;
            if diff.abs() < T::lit(1e-10) {
                break;
            }
            if diff > T::zero() {
                lo = beta;
                beta = if hi.is_infinite() { beta * T::lit(2.0) } else { (beta + hi) / T::lit(2.0) };
            } else {
                hi = beta;
                beta = (beta + lo) / T::lit(2.0);
            }
            h = entropy_at(beta, row);
        }
        betas[i] = beta;
        entropies[i] = h.as_f64() / std::f64::consts::LN_2;
    }
    Ok(Calibration {
        conditional,
        betas,
        entropies,
    })
}

/// Symmetrized joint affinities `(p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_probabilities<T: Real>(conditional: &[T], n: usize) -> Vec<T> {
    let two_n = T::from_usize_lossy(2 * n);
    let mut p = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            p[i * n + j] = (conditional[i * n + j] + conditional[j * n + i]) / two_n;
        }
    }
    p
}

fn student_kernel<T: Real>(y: &[T], n: usize, k: usize) -> (Vec<T>, T) {
    let mut num = vec![T::zero(); n * n];
    let mut z = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            let q = T::one() / (T::one() + sq_dist(&y[i * k..(i + 1) * k], &y[j * k..(j + 1) * k]));
            num[i * n + j] = q;
            num[j * n + i] = q;
            z += q + q;
        }
    }
    (num, z)
}

/// `KL(P || Q)` for output coordinates `y` (row-major `n x k`).
pub fn kl_divergence<T: Real>(p: &[T], y: &[T], n: usize, k: usize) -> T {
    let (num, z) = student_kernel(y, n, k);
    let mut kl = T::zero();
    for i in 0..n {
        for j in 0..n {
            let pij = p[i * n + j];
            if i != j && pij > T::zero() {
                kl += pij * (pij / (num[i * n + j] / z)).ln();
            }
        }
    }
    kl
}

/// Gradient of the KL divergence with `P` scaled by `exaggeration`.
pub fn kl_gradient<T: Real>(p: &[T], y: &[T], n: usize, k: usize, exaggeration: T) -> Vec<T> {
    let (num, z) = student_kernel(y, n, k);
    let four = T::lit(4.0);
    let mut grad = vec![T::zero(); n * k];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let w = (exaggeration * p[i * n + j] - num[i * n + j] / z) * num[i * n + j];
            for c in 0..k {
                grad[i * k + c] += four * w * (y[i * k + c] - y[j * k + c]);
            }
        }
    }
    grad
}

#[derive(Clone, Debug)]
pub struct TsneResult<T> {
    /// Row-major `n x out_dim`.
    pub embedding: Vec<T>,
    pub kl: f64,
    pub kl_trace: Vec<f64>,
    pub entropies: Vec<f64>,
}

pub fn tsne<T: Real>(x: &[T], n: usize, d: usize, cfg: &TsneConfig) -> Result<TsneResult<T>> {
    if n < 4 {
        return Err(Error::config(format!("t-SNE needs at least 4 points, got {n}")));
    }
    if !(cfg.perplexity > 1.0) {
        return Err(Error::config("perplexity must exceed 1"));
    }
    if cfg.perplexity >= (n - 1) as f64 {
        return Err(Error::config(format!(
            "perplexity {} must be below n - 1 = {}",
            cfg.perplexity,
            n - 1
        )));
    }
    if cfg.perplexity > (n - 1) as f64 / 3.0 {
        log::warn!("perplexity {} is large for {n} points", cfg.perplexity);
    }
    if cfg.out_dim == 0 || cfg.iterations == 0 {
        return Err(Error::config("out_dim and iterations must be >= 1"));
    }
    let k = cfg.out_dim;
    let cal = calibrate_affinities(x, n, d, cfg.perplexity)?;
    let p = joint_probabilities(&cal.conditional, n);
    let mut r = rng::stream(cfg.seed, &[0x75E]);
    let mut y: Vec<T> = (0..n * k)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut r);
            T::lit(1e-4 * z)
        })
        .collect();
    let mut update = vec![T::zero(); n * k];
    let mut gains = vec![T::one(); n * k];
    let lr = T::lit(cfg.learning_rate);
    let min_gain = T::lit(0.01);
    let mut trace = Vec::new();
    for iter in 0..cfg.iterations {
        let exaggeration = if iter < cfg.exaggeration_iters { T::lit(cfg.early_exaggeration) } else { T::one() };
        let momentum = T::lit(if iter < cfg.momentum_switch { cfg.momentum } else { cfg.final_momentum });
        let grad = kl_gradient(&p, &y, n, k, exaggeration);
        for idx in 0..n * k {
            let same_sign = (grad[idx] > T::zero()) == (update[idx] > T::zero());
            gains[idx] = if same_sign { gains[idx] * T::lit(0.8) } else { gains[idx] + T::lit(0.2) };
            gains[idx] = gains[idx].max(min_gain);
            update[idx] = momentum * update[idx] - lr * gains[idx] * grad[idx];
            y[idx] += update[idx];
        }
        for c in 0..k {
            let mean = (0..n).map(|i| y[i * k + c]).sum::<T>() / T::from_usize_lossy(n);
            for i in 0..n {
                y[i * k + c] -= mean;
            }
        }
        if cfg.trace {
            trace.push(kl_divergence(&p, &y, n, k).as_f64());
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("t-SNE diverged".into()));
    }
    let kl = kl_divergence(&p, &y, n, k).as_f64();
    Ok(TsneResult {
        embedding: y,
        kl,
        kl_trace: trace,
        entropies: cal.entropies,
    })
}
