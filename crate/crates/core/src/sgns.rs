//! Skip-gram-with-negative-sampling machinery shared by the walk-based and
//! pair-based embedding trainers: noise sampler, lock-free parameter tables,
//! the pairwise sigmoid objective and its SGD update.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::scalar::{dot, sigmoid, softplus};
use crate::{Error, Real, Result};

/// Noise distribution `count^power / Z` sampled in O(1) with Vose's alias
/// method.
#[derive(Clone, Debug)]
pub struct NegativeSampler {
    items: Vec<u32>,
    prob: Vec<f64>,
    alias: Vec<u32>,
    weights: Vec<f64>,
}

impl NegativeSampler {
    /// `counts[i]` is the frequency of item `i`; zero-count items are never
    /// drawn.
    pub fn from_counts(counts: &[u64], power: f64) -> Result<Self> {
        let weighted: Vec<(u32, f64)> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as u32, (c as f64).powf(power)))
            .collect();
        Self::from_weights(weighted)
    }

    pub fn from_weights(weighted: Vec<(u32, f64)>) -> Result<Self> {
        let weighted: Vec<(u32, f64)> = weighted.into_iter().filter(|(_, w)| *w > 0.0).collect();
        if weighted.is_empty() {
            return Err(Error::config("negative sampler needs at least one positive weight"));
        }
        let n = weighted.len();
        let total: f64 = weighted.iter().map(|(_, w)| w).sum();
        let weights: Vec<f64> = weighted.iter().map(|(_, w)| w / total).collect();
        let items: Vec<u32> = weighted.iter().map(|(i, _)| *i).collect();
        let mut scaled: Vec<f64> = weights.iter().map(|p| p * n as f64).collect();
        let mut prob = vec![0.0; n];
        let mut alias = vec![0u32; n];
        let (mut small, mut large): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| scaled[i] < 1.0);
        while let (Some(s), Some(&l)) = (small.pop(), large.last()) {
            prob[s] = scaled[s];
            alias[s] = l as u32;
            scaled[l] -= 1.0 - scaled[s];
            if scaled[l] < 1.0 {
                large.pop();
                small.push(l);
            }
        }
        for i in large.into_iter().chain(small) {
            prob[i] = 1.0;
        }
        Ok(NegativeSampler {
            items,
            prob,
            alias,
            weights,
        })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let k = rng.gen_range(0..self.items.len());
        let slot = if rng.gen::<f64>() < self.prob[k] {
            k
        } else {
            self.alias[k] as usize
        };
        self.items[slot]
    }

    /// Exact sampling probability of each item.
    pub fn probabilities(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.items.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn support_len(&self) -> usize {
        self.items.len()
    }
}

/// Parameter table whose rows can be updated concurrently without locks.
/// Values live in relaxed atomics; concurrent writers may lose updates, the
/// usual asynchronous-SGD trade.
pub struct SharedTable<T> {
    dim: usize,
    cells: Vec<AtomicU64>,
    _marker: std::marker::PhantomData<T>,
}

impl<T: Real> SharedTable<T> {
    pub fn from_fn(rows: usize, dim: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut cells = Vec::with_capacity(rows * dim);
        for r in 0..rows {
            for c in 0..dim {
                cells.push(AtomicU64::new(f(r, c).to_bits64()));
            }
        }
        SharedTable {
            dim,
            cells,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn read_row(&self, row: usize, out: &mut [T]) {
        let base = row * self.dim;
        for (o, cell) in out.iter_mut().zip(&self.cells[base..base + self.dim]) {
            *o = T::from_bits64(cell.load(Ordering::Relaxed));
        }
    }

    /// `row += scale * delta`
    #[inline]
    pub fn add_row(&self, row: usize, delta: &[T], scale: T) {
        let base = row * self.dim;
        for (d, cell) in delta.iter().zip(&self.cells[base..base + self.dim]) {
            let cur = T::from_bits64(cell.load(Ordering::Relaxed));
            cell.store((cur + *d * scale).to_bits64(), Ordering::Relaxed);
        }
    }

    pub fn row_vec(&self, row: usize) -> Vec<T> {
        let mut v = vec![T::zero(); self.dim];
        self.read_row(row, &mut v);
        v
    }
}

/// Negative log-likelihood of one positive pair and its negatives:
/// `-log s(u.v) - sum log s(-u.v')`.
pub fn pair_loss<T: Real>(u: &[T], v: &[T], negs: &[&[T]]) -> Result<T> {
    check_dims(u, v, negs)?;
    let mut loss = softplus(-dot(u, v));
    for n in negs {
        loss += softplus(dot(u, n));
    }
    Ok(loss)
}

/// Gradients of [`pair_loss`] with respect to `u`, `v` and each negative.
pub struct PairGradient<T> {
    pub du: Vec<T>,
    pub dv: Vec<T>,
    pub dnegs: Vec<Vec<T>>,
}

pub fn pair_loss_gradient<T: Real>(u: &[T], v: &[T], negs: &[&[T]]) -> Result<PairGradient<T>> {
    check_dims(u, v, negs)?;
    let gp = sigmoid(dot(u, v)) - T::one();
    let mut du: Vec<T> = v.iter().map(|&x| gp * x).collect();
    let dv: Vec<T> = u.iter().map(|&x| gp * x).collect();
    let mut dnegs = Vec::with_capacity(negs.len());
    for n in negs {
        let gn = sigmoid(dot(u, n));
        for (d, &x) in du.iter_mut().zip(n.iter()) {
            *d += gn * x;
        }
        dnegs.push(u.iter().map(|&x| gn * x).collect());
    }
    Ok(PairGradient { du, dv, dnegs })
}

fn check_dims<T>(u: &[T], v: &[T], negs: &[&[T]]) -> Result<()> {
    if v.len() != u.len() || negs.iter().any(|n| n.len() != u.len()) {
        return Err(Error::data("pair objective vectors differ in dimension"));
    }
    Ok(())
}

/// Scratch buffers for [`sgd_pair_step`].
pub struct StepScratch<T> {
    h: Vec<T>,
    grad_h: Vec<T>,
    v: Vec<T>,
}

impl<T: Real> StepScratch<T> {
    pub fn new(dim: usize) -> Self {
        StepScratch {
            h: vec![T::zero(); dim],
            grad_h: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
        }
    }
}

/// One SGD step on [`pair_loss`] for input row `center`, positive output
/// row `positive` and the given negative output rows. Output rows are
/// updated immediately, the input row once at the end. Returns the loss
/// before the step.
pub fn sgd_pair_step<T: Real>(
    input: &SharedTable<T>,
    output: &SharedTable<T>,
    center: usize,
    positive: usize,
    negatives: &[usize],
    lr: T,
    scratch: &mut StepScratch<T>,
) -> T {
    input.read_row(center, &mut scratch.h);
    scratch.grad_h.iter_mut().for_each(|g| *g = T::zero());
    let mut loss = T::zero();
    let targets = std::iter::once((positive, T::one())).chain(negatives.iter().map(|&n| (n, T::zero())));
    for (target, label) in targets {
        output.read_row(target, &mut scratch.v);
        let f = dot(&scratch.h, &scratch.v);
        loss += if label > T::zero() { softplus(-f) } else { softplus(f) };
        // descent direction: (label - s(f)) is minus the derivative w.r.t. f
        let g = (label - sigmoid(f)) * lr;
        for (gh, &v) in scratch.grad_h.iter_mut().zip(scratch.v.iter()) {
            *gh += g * v;
        }
        output.add_row(target, &scratch.h, g);
    }
    input.add_row(center, &scratch.grad_h, T::one());
    loss
}

/// Linearly decayed learning rate with an absolute floor.
#[inline]
pub fn decayed_lr(initial: f64, progress: f64, floor: f64) -> f64 {
    (initial * (1.0 - progress.clamp(0.0, 1.0))).max(floor)
}

pub const MIN_LR: f64 = 1e-4;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn noise_distribution_power() {
        let s = NegativeSampler::from_counts(&[3, 1], 0.75).unwrap();
        let p: Vec<_> = s.probabilities().collect();
        let expected = 3f64.powf(0.75) / (3f64.powf(0.75) + 1.0);
        assert!((p[0].1 - expected).abs() < 1e-12);
        assert!((expected - 0.695).abs() < 1e-3);
    }

    #[test]
    fn alias_sampler_matches_probabilities() {
        let s = NegativeSampler::from_counts(&[5, 0, 1, 10, 3], 0.75).unwrap();
        let mut rng = rng::stream(1, &[]);
        let mut hits = [0usize; 5];
        let n = 400_000;
        for _ in 0..n {
            hits[s.sample(&mut rng) as usize] += 1;
        }
        assert_eq!(hits[1], 0);
        for (i, p) in s.probabilities() {
            let freq = hits[i as usize] as f64 / n as f64;
            assert!((freq - p).abs() < 0.005, "item {i}: {freq} vs {p}");
        }
    }

    #[test]
    fn empty_sampler_is_error() {
        assert!(NegativeSampler::from_counts(&[0, 0], 0.75).is_err());
    }

    #[test]
    fn loss_at_zero_is_two_log_two() {
        let u = [0.0f64, 0.0];
        let l = pair_loss(&u, &[1.0, 2.0], &[&[3.0, 4.0]]).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
        assert!((l - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn loss_saturated_positive_leaves_negatives() {
        let u = [100.0f64, 0.0];
        let v = [100.0f64, 0.0];
        let n = [0.0f64, 5.0];
        let l = pair_loss(&u, &v, &[&n, &n]).unwrap();
        assert!((l - 2.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_error() {
        assert!(pair_loss(&[1.0f64], &[1.0, 2.0], &[]).is_err());
        assert!(pair_loss_gradient(&[1.0f64], &[1.0], &[&[1.0, 2.0]]).is_err());
    }

    #[test]
    fn sgd_step_follows_negative_gradient() {
        let dim = 3;
        let u = [0.3f64, -0.2, 0.5];
        let v = [0.1f64, 0.4, -0.3];
        let n = [-0.5f64, 0.2, 0.1];
        let input = SharedTable::from_fn(1, dim, |_, c| u[c]);
        let output = SharedTable::from_fn(2, dim, |r, c| if r == 0 { v[c] } else { n[c] });
        let lr = 1e-3;
        let mut scratch = StepScratch::new(dim);
        sgd_pair_step(&input, &output, 0, 0, &[1], lr, &mut scratch);
        let g = pair_loss_gradient(&u, &v, &[&n]).unwrap();
        // the input row uses the pre-update output rows
        for c in 0..dim {
            assert!((input.row_vec(0)[c] - (u[c] - lr * g.du[c])).abs() < 1e-15);
            assert!((output.row_vec(0)[c] - (v[c] - lr * g.dv[c])).abs() < 1e-15);
            assert!((output.row_vec(1)[c] - (n[c] - lr * g.dnegs[0][c])).abs() < 1e-15);
        }
    }

    #[test]
    fn lr_schedule() {
        assert_eq!(decayed_lr(0.025, 0.0, MIN_LR), 0.025);
        assert!((decayed_lr(0.025, 0.5, MIN_LR) - 0.0125).abs() < 1e-15);
        assert_eq!(decayed_lr(0.025, 1.0, MIN_LR), MIN_LR);
    }
}
