use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `k x k` counts, rows gold and columns predicted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    k: usize,
    counts: Vec<u64>,
}

impl Confusion {
    pub fn new(k: usize) -> Self {
        Confusion {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_predictions(gold: &[usize], pred: &[usize], k: usize) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::data(format!(
                "{} gold labels but {} predictions",
                gold.len(),
                pred.len()
            )));
        }
        let mut c = Confusion::new(k);
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= k || p >= k {
                return Err(Error::data(format!("label outside {k} classes")));
            }
            c.add(g, p);
        }
        Ok(c)
    }

    pub fn add(&mut self, gold: usize, pred: usize) {
        self.counts[gold * self.k + pred] += 1;
    }

    pub fn merge(&mut self, other: &Confusion) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sums(&self) -> Vec<u64> {
        self.counts.chunks(self.k).map(|r| r.iter().sum()).collect()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.k).map(<[u64]>::to_vec).collect()
    }

    /// Per-class F1 with `0/0 = 0`.
    pub fn per_class_f1(&self) -> Vec<f64> {
        (0..self.k)
            .map(|c| {
                let tp = self.get(c, c) as f64;
                let gold: u64 = (0..self.k).map(|p| self.get(c, p)).sum();
                let pred: u64 = (0..self.k).map(|g| self.get(g, c)).sum();
                let denom = (gold + pred) as f64;
                if denom == 0.0 {
                    0.0
                } else {
                    2.0 * tp / denom
                }
            })
            .collect()
    }

    pub fn macro_f1(&self) -> f64 {
        let f = self.per_class_f1();
        if f.is_empty() {
            0.0
        } else {
            f.iter().sum::<f64>() / f.len() as f64
        }
    }

    pub fn accuracy(&self) -> f64 {
        let hits: u64 = (0..self.k).map(|c| self.get(c, c)).sum();
        hits as f64 / self.total().max(1) as f64
    }
}

/// Unweighted mean of per-class F1 over all `num_classes` classes.
pub fn macro_f1(gold: &[usize], pred: &[usize], num_classes: usize) -> Result<f64> {
    Ok(Confusion::from_predictions(gold, pred, num_classes)?.macro_f1())
}

/// Mean silhouette coefficient under Euclidean distance. Points in singleton
/// clusters score 0.
pub fn silhouette(points: &[f64], d: usize, labels: &[usize]) -> Result<f64> {
    let n = labels.len();
    if points.len() != n * d {
        return Err(Error::data("silhouette: points and labels disagree in length"));
    }
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::data("silhouette needs at least two clusters"));
    }
    let dist = |i: usize, j: usize| {
        points[i * d..(i + 1) * d]
            .iter()
            .zip(&points[j * d..(j + 1) * d])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let mut total = 0.0;
    let mut sums = vec![0.0; k];
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if i != j {
                sums[labels[j]] += dist(i, j);
            }
        }
        let own = labels[i];
        if sizes[own] < 2 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}
