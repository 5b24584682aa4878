//! Relational embeddings: a two-table bilinear sigmoid model trained
//! directly on observed (retweeter, retweeted) pairs. The input table holds
//! source vectors, the output table target vectors; every positive update
//! is a pair that occurs in the data and only negatives are sampled.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, EmbeddingMeta};
use crate::graph::{InteractionGraph, UserId};
use crate::sgns::{decayed_lr, sgd_pair_step, NegativeSampler, SharedTable, StepScratch, MIN_LR};
use crate::{rng, Error, Real, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelationalConfig {
    pub dim: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
    pub ns_power: f64,
    /// Represent each user by input ++ output vectors (2 * dim).
    pub concat_tables: bool,
    /// Collapse repeated pairs to one before training.
    pub dedup: bool,
    pub include_self_retweets: bool,
    pub workers: usize,
    pub seed: u64,
}

impl Default for RelationalConfig {
    fn default() -> Self {
        RelationalConfig {
            dim: 20,
            negatives: 5,
            epochs: 5,
            initial_lr: 0.025,
            ns_power: 0.75,
            concat_tables: false,
            dedup: false,
            include_self_retweets: false,
            workers: 1,
            seed: 0,
        }
    }
}

impl RelationalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dim must be >= 1"));
        }
        if self.negatives == 0 {
            return Err(Error::config("negatives must be >= 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if !(self.initial_lr > 0.0) {
            return Err(Error::config("initial_lr must be positive"));
        }
        if !(0.0..=1.0).contains(&self.ns_power) {
            return Err(Error::config("ns_power must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Training event reported to an observer in deterministic mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PairEvent {
    Positive { source: u32, target: u32 },
    Negative { source: u32, target: u32 },
}

/// Trained tables over dense user indices.
pub struct RelationalModel<T> {
    pub input: SharedTable<T>,
    pub output: SharedTable<T>,
    pub is_source: Vec<bool>,
    pub is_target: Vec<bool>,
    /// Largest row norm of either table after each epoch.
    pub max_norm_per_epoch: Vec<f64>,
}

impl<T: Real> RelationalModel<T> {
    fn max_norm(&self) -> f64 {
        let n = self.is_source.len();
        (0..n)
            .flat_map(|i| [self.input.row_vec(i), self.output.row_vec(i)])
            .map(|v| crate::scalar::norm(&v).as_f64())
            .fold(0.0, f64::max)
    }
}

/// Train on dense pairs over `num_users` users, drawing negatives from
/// `noise`. `observer` sees every update when `cfg.workers == 1`.
pub fn train_pairs<T: Real>(
    pairs: &[(u32, u32)],
    num_users: usize,
    noise: &NegativeSampler,
    cfg: &RelationalConfig,
    mut observer: Option<&mut dyn FnMut(PairEvent)>,
) -> Result<RelationalModel<T>> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::config("relational training needs at least one pair"));
    }
    let mut init_rng = rng::stream(cfg.seed, &[0x2E1]);
    let scale = 0.5 / cfg.dim as f64;
    let input = SharedTable::from_fn(num_users, cfg.dim, |_, _| T::lit(init_rng.gen_range(-scale..scale)));
    let output = SharedTable::from_fn(num_users, cfg.dim, |_, _| T::zero());
    let mut is_source = vec![false; num_users];
    let mut is_target = vec![false; num_users];
    for &(s, t) in pairs {
        is_source[s as usize] = true;
        is_target[t as usize] = true;
    }
    let mut model = RelationalModel {
        input,
        output,
        is_source,
        is_target,
        max_norm_per_epoch: Vec::with_capacity(cfg.epochs),
    };
    let total = pairs.len() * cfg.epochs;
    let processed = AtomicUsize::new(0);
    let mut order: Vec<u32> = (0..pairs.len() as u32).collect();
    let workers = cfg.workers.max(1);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, &[0x5F1, epoch as u64]));
        processed.store(epoch * pairs.len(), Ordering::Relaxed);
        if workers == 1 {
            let mut r = rng::stream(cfg.seed, &[0x2E2, epoch as u64, 0]);
            run_slice(pairs, &order, &model, noise, cfg, &processed, total, &mut r, &mut observer);
        } else {
            let chunk = order.len().div_ceil(workers);
            order.par_chunks(chunk).enumerate().for_each(|(k, slice)| {
                let mut r = rng::stream(cfg.seed, &[0x2E2, epoch as u64, k as u64]);
                run_slice(pairs, slice, &model, noise, cfg, &processed, total, &mut r, &mut None);
            });
        }
        let norm = model.max_norm();
        model.max_norm_per_epoch.push(norm);
    }
    Ok(model)
}

#[allow(clippy::too_many_arguments)]
fn run_slice<T: Real>(
    pairs: &[(u32, u32)],
    slice: &[u32],
    model: &RelationalModel<T>,
    noise: &NegativeSampler,
    cfg: &RelationalConfig,
    processed: &AtomicUsize,
    total: usize,
    r: &mut rng::StageRng,
    observer: &mut Option<&mut dyn FnMut(PairEvent)>,
) {
    let mut scratch = StepScratch::new(cfg.dim);
    let mut negs: Vec<usize> = Vec::with_capacity(cfg.negatives);
    let mut lr = T::lit(cfg.initial_lr);
    for (k, &pi) in slice.iter().enumerate() {
        if k % 1024 == 0 {
            let done = processed.fetch_add(k.min(1024), Ordering::Relaxed) as f64;
            lr = T::lit(decayed_lr(cfg.initial_lr, done / total as f64, MIN_LR));
        }
        let (s, t) = pairs[pi as usize];
        negs.clear();
        for _ in 0..cfg.negatives {
            // the only noise candidate may be the positive target
            for _ in 0..16 {
                let x = noise.sample(r);
                if x != t {
                    negs.push(x as usize);
                    break;
                }
            }
        }
        if let Some(f) = observer.as_mut() {
            f(PairEvent::Positive { source: s, target: t });
            for &n in &negs {
                f(PairEvent::Negative { source: s, target: n as u32 });
            }
        }
        sgd_pair_step(&model.input, &model.output, s as usize, t as usize, &negs, lr, &mut scratch);
    }
}

/// Relational embeddings for every user that appears as a source or target
/// of a (non-self) retweet. Sources get their input vector, target-only users
/// their output vector; `concat_tables` gives everyone both.
pub fn train_relational<T: Real>(graph: &InteractionGraph, cfg: &RelationalConfig) -> Result<EmbeddingMatrix<T>> {
    let g;
    let graph = if cfg.dedup {
        g = graph.deduplicated();
        &g
    } else {
        graph
    };
    let pairs = graph.dense_pairs(cfg.include_self_retweets);
    let n = graph.num_users();
    let mut target_counts = vec![0u64; n];
    for &(_, t) in &pairs {
        target_counts[t as usize] += 1;
    }
    if pairs.is_empty() {
        return Err(Error::config("relational training needs at least one pair"));
    }
    let noise = NegativeSampler::from_counts(&target_counts, cfg.ns_power)?;
    let model = train_pairs::<T>(&pairs, n, &noise, cfg, None)?;
    embedding_from_model(&model, graph.users(), cfg)
}

pub fn embedding_from_model<T: Real>(
    model: &RelationalModel<T>,
    users: &[UserId],
    cfg: &RelationalConfig,
) -> Result<EmbeddingMatrix<T>> {
    let dim = if cfg.concat_tables { 2 * cfg.dim } else { cfg.dim };
    let mut rows = Vec::new();
    for (i, &u) in users.iter().enumerate() {
        if !(model.is_source[i] || model.is_target[i]) {
            continue;
        }
        let v = if cfg.concat_tables {
            let mut v = model.input.row_vec(i);
            v.extend(model.output.row_vec(i));
            v
        } else if model.is_source[i] {
            model.input.row_vec(i)
        } else {
            model.output.row_vec(i)
        };
        rows.push((u, v));
    }
    let meta = EmbeddingMeta::new("re", cfg.seed).with("config", crate::config_digest(cfg));
    let m = EmbeddingMatrix::from_rows(dim, rows, meta)?;
    if !m.all_finite() {
        return Err(Error::Numeric("relational embedding produced non-finite vectors".into()));
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{dot, sigmoid};
    use std::collections::HashSet;

    fn uid(x: u64) -> UserId {
        UserId(x)
    }

    #[test]
    fn degenerate_pair_saturates() {
        // users a=0, b=1, c=2; only (a, b) observed, noise only c
        let pairs = vec![(0u32, 1u32); 50];
        let noise = NegativeSampler::from_weights(vec![(2, 1.0)]).unwrap();
        let mut prev_gap = f64::NEG_INFINITY;
        for epochs in [1, 4, 16] {
            let cfg = RelationalConfig { dim: 4, negatives: 1, epochs, initial_lr: 0.1, seed: 3, ..Default::default() };
            let m = train_pairs::<f64>(&pairs, 3, &noise, &cfg, None).unwrap();
            let a = m.input.row_vec(0);
            let pos = sigmoid(dot(&a, &m.output.row_vec(1)));
            let neg = sigmoid(dot(&a, &m.output.row_vec(2)));
            assert!(pos > 0.5 && neg < 0.5, "epochs {epochs}: {pos} {neg}");
            let gap = pos - neg;
            assert!(gap > prev_gap);
            prev_gap = gap;
        }
        assert!(prev_gap > 0.9);
    }

    #[test]
    fn only_observed_pairs_are_positive() {
        let recs = vec![
            (uid(1), uid(2), 3),
            (uid(2), uid(3), 1),
            (uid(3), uid(1), 2),
            (uid(4), uid(2), 1),
            (uid(4), uid(4), 5),
        ];
        let g = InteractionGraph::from_records(recs).unwrap();
        let pairs = g.dense_pairs(false);
        let allowed: HashSet<(u32, u32)> = pairs.iter().copied().collect();
        let mut counts = vec![0u64; g.num_users()];
        for &(_, t) in &pairs {
            counts[t as usize] += 1;
        }
        let noise = NegativeSampler::from_counts(&counts, 0.75).unwrap();
        let mut seen = Vec::new();
        let mut obs = |e: PairEvent| seen.push(e);
        let cfg = RelationalConfig { dim: 4, epochs: 3, ..Default::default() };
        train_pairs::<f64>(&pairs, g.num_users(), &noise, &cfg, Some(&mut obs)).unwrap();
        let positives: Vec<_> = seen
            .iter()
            .filter_map(|e| match *e {
                PairEvent::Positive { source, target } => Some((source, target)),
                _ => None,
            })
            .collect();
        assert_eq!(positives.len(), pairs.len() * 3);
        assert!(positives.iter().all(|p| allowed.contains(p)));
        for e in &seen {
            if let PairEvent::Negative { target, .. } = e {
                assert!(counts[*target as usize] > 0, "negatives come from the noise support");
            }
        }
    }

    #[test]
    fn every_endpoint_gets_a_vector() {
        let g = InteractionGraph::from_records(vec![(uid(1), uid(2), 1), (uid(3), uid(2), 2)]).unwrap();
        let cfg = RelationalConfig { dim: 3, ..Default::default() };
        let m = train_relational::<f64>(&g, &cfg).unwrap();
        assert_eq!(m.ids(), &[uid(1), uid(2), uid(3)]);
        assert_eq!(m.meta.method, "re");
        let c = train_relational::<f64>(&g, &RelationalConfig { concat_tables: true, ..cfg }).unwrap();
        assert_eq!(c.dim(), 6);
    }

    #[test]
    fn norm_growth_is_bounded() {
        let mut recs = Vec::new();
        for s in 0..20u64 {
            for t in 0..3u64 {
                recs.push((uid(s), uid(100 + (s + t) % 7), 1 + t));
            }
        }
        let g = InteractionGraph::from_records(recs).unwrap();
        let pairs = g.dense_pairs(false);
        let mut counts = vec![0u64; g.num_users()];
        for &(_, t) in &pairs {
            counts[t as usize] += 1;
        }
        let noise = NegativeSampler::from_counts(&counts, 0.75).unwrap();
        let cfg = RelationalConfig { dim: 8, epochs: 4, ..Default::default() };
        let m = train_pairs::<f64>(&pairs, g.num_users(), &noise, &cfg, None).unwrap();
        let bound = cfg.initial_lr * (1 + cfg.negatives) as f64 * pairs.len() as f64;
        let mut prev = 0.5 / cfg.dim as f64 * (cfg.dim as f64).sqrt();
        for &n in &m.max_norm_per_epoch {
            assert!(n - prev < bound);
            prev = n;
        }
    }

    #[test]
    fn deterministic_and_config_errors() {
        let g = InteractionGraph::from_records(vec![(uid(1), uid(2), 4), (uid(2), uid(3), 1)]).unwrap();
        let cfg = RelationalConfig { dim: 5, seed: 8, ..Default::default() };
        let a = train_relational::<f32>(&g, &cfg).unwrap();
        let b = train_relational::<f32>(&g, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(train_relational::<f64>(&g, &RelationalConfig { epochs: 0, ..Default::default() }).is_err());
        let only_self = InteractionGraph::from_records(vec![(uid(1), uid(1), 1)]).unwrap();
        assert!(train_relational::<f64>(&only_self, &RelationalConfig::default()).is_err());
    }
}
