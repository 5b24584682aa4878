//! Skip-gram with negative sampling over walk corpora.

use std::sync::atomic::{AtomicUsize, Ordering};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, EmbeddingMeta};
use crate::sgns::{decayed_lr, sgd_pair_step, NegativeSampler, SharedTable, StepScratch, MIN_LR};
use crate::walk::WalkCorpus;
use crate::{rng, Error, Real, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub dim: usize,
    /// Negative samples per positive pair.
    pub negatives: usize,
    pub initial_lr: f64,
    pub epochs: usize,
    pub ns_power: f64,
    /// Context half-width, in walk steps.
    pub window: usize,
    /// 1 runs the bit-reproducible sequential path; more workers update the
    /// shared tables without locks.
    pub workers: usize,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        SkipGramConfig {
            dim: 20,
            negatives: 5,
            initial_lr: 0.025,
            epochs: 1,
            ns_power: 0.75,
            window: 10,
            workers: 1,
            seed: 0,
        }
    }
}

impl SkipGramConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("dim must be >= 1"));
        }
        if self.negatives == 0 {
            return Err(Error::config("negatives must be >= 1"));
        }
        if !(self.initial_lr > 0.0) {
            return Err(Error::config("initial_lr must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.ns_power) {
            return Err(Error::config("ns_power must lie in [0, 1]"));
        }
        if self.window == 0 {
            return Err(Error::config("window must be >= 1"));
        }
        Ok(())
    }
}

/// Center / context / negatives triple used to evaluate the objective.
#[derive(Clone, Debug)]
pub struct Probe {
    pub center: u32,
    pub context: u32,
    pub negatives: Vec<u32>,
}

pub struct SkipGramTrainer<T> {
    cfg: SkipGramConfig,
    input: SharedTable<T>,
    output: SharedTable<T>,
    sampler: NegativeSampler,
    processed: AtomicUsize,
    total_work: usize,
}

impl<T: Real> SkipGramTrainer<T> {
    pub fn new(corpus: &WalkCorpus, cfg: &SkipGramConfig) -> Result<Self> {
        cfg.validate()?;
        if corpus.is_empty() || corpus.num_tokens() == 0 {
            return Err(Error::config("skip-gram needs a non-empty corpus"));
        }
        let n = corpus.counts().len();
        let sampler = NegativeSampler::from_counts(corpus.counts(), cfg.ns_power)?;
        let mut init_rng = rng::stream(cfg.seed, &[0x1417]);
        let scale = 0.5 / cfg.dim as f64;
        let input = SharedTable::from_fn(n, cfg.dim, |_, _| T::lit(init_rng.gen_range(-scale..scale)));
        let output = SharedTable::from_fn(n, cfg.dim, |_, _| T::zero());
        Ok(SkipGramTrainer {
            cfg: cfg.clone(),
            input,
            output,
            sampler,
            processed: AtomicUsize::new(0),
            total_work: corpus.num_tokens() * cfg.epochs,
        })
    }

    fn draw_negatives<R: Rng>(&self, positive: u32, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        for _ in 0..self.cfg.negatives {
            // the only candidate may be the positive itself
            for _ in 0..16 {
                let x = self.sampler.sample(rng);
                if x != positive {
                    out.push(x as usize);
                    break;
                }
            }
        }
    }

    fn train_range(&self, corpus: &WalkCorpus, range: std::ops::Range<usize>, rng: &mut rng::StageRng) {
        let mut scratch = StepScratch::new(self.cfg.dim);
        let mut negs = Vec::with_capacity(self.cfg.negatives);
        let w = self.cfg.window;
        let mut pending = 0usize;
        let mut lr = T::lit(self.current_lr());
        for si in range {
            let seq = corpus.sequence(si);
            for (i, &center) in seq.iter().enumerate() {
                let lo = i.saturating_sub(w);
                let hi = (i + w).min(seq.len() - 1);
                for (j, &ctx) in seq.iter().enumerate().take(hi + 1).skip(lo) {
                    if j == i {
                        continue;
                    }
                    self.draw_negatives(ctx, rng, &mut negs);
                    sgd_pair_step(
                        &self.input,
                        &self.output,
                        center as usize,
                        ctx as usize,
                        &negs,
                        lr,
                        &mut scratch,
                    );
                }
                pending += 1;
                if pending == 1024 {
                    self.processed.fetch_add(pending, Ordering::Relaxed);
                    pending = 0;
                    lr = T::lit(self.current_lr());
                }
            }
        }
        self.processed.fetch_add(pending, Ordering::Relaxed);
    }

    fn current_lr(&self) -> f64 {
        let done = self.processed.load(Ordering::Relaxed) as f64;
        decayed_lr(self.cfg.initial_lr, done / self.total_work as f64, MIN_LR)
    }

    pub fn train_epoch(&self, corpus: &WalkCorpus, epoch: usize) {
        let workers = self.cfg.workers.max(1);
        let n = corpus.len();
        if workers == 1 {
            let mut r = rng::stream(self.cfg.seed, &[0x5E9, epoch as u64, 0]);
            self.train_range(corpus, 0..n, &mut r);
            return;
        }
        let chunk = n.div_ceil(workers);
        (0..workers).into_par_iter().for_each(|k| {
            let mut r = rng::stream(self.cfg.seed, &[0x5E9, epoch as u64, k as u64]);
            self.train_range(corpus, (k * chunk).min(n)..((k + 1) * chunk).min(n), &mut r);
        });
    }

    /// Mean objective over fixed probes under the current parameters.
    pub fn probe_loss(&self, probes: &[Probe]) -> f64 {
        let mut total = 0.0;
        for p in probes {
            let u = self.input.row_vec(p.center as usize);
            let v = self.output.row_vec(p.context as usize);
            let negs: Vec<Vec<T>> = p.negatives.iter().map(|&n| self.output.row_vec(n as usize)).collect();
            let refs: Vec<&[T]> = negs.iter().map(Vec::as_slice).collect();
            total += crate::sgns::pair_loss(&u, &v, &refs).expect("same dims").as_f64();
        }
        total / probes.len().max(1) as f64
    }

    /// Random (center, context, negatives) probes drawn from the corpus.
    pub fn sample_probes(&self, corpus: &WalkCorpus, count: usize, seed: u64) -> Vec<Probe> {
        let mut r = rng::stream(seed, &[0xB0B]);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let seq = corpus.sequence(r.gen_range(0..corpus.len()));
            if seq.len() < 2 {
                continue;
            }
            let i = r.gen_range(0..seq.len());
            let lo = i.saturating_sub(self.cfg.window);
            let hi = (i + self.cfg.window).min(seq.len() - 1);
            let j = r.gen_range(lo..=hi);
            if j == i {
                continue;
            }
            let mut negs = Vec::new();
            self.draw_negatives(seq[j], &mut r, &mut negs);
            out.push(Probe {
                center: seq[i],
                context: seq[j],
                negatives: negs.into_iter().map(|x| x as u32).collect(),
            });
        }
        out
    }

    /// Input-side vectors of every node that occurs in the corpus.
    pub fn into_embedding(self, corpus: &WalkCorpus, method: &str) -> Result<EmbeddingMatrix<T>> {
        let rows = corpus
            .counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, _)| (corpus.users()[i], self.input.row_vec(i)))
            .collect();
        let meta = EmbeddingMeta::new(method, self.cfg.seed)
            .with("config", crate::config_digest(&self.cfg));
        let m = EmbeddingMatrix::from_rows(self.cfg.dim, rows, meta)?;
        if !m.all_finite() {
            return Err(Error::Numeric(format!("{method} produced non-finite vectors")));
        }
        Ok(m)
    }
}

/// Train skip-gram on `corpus` and return the input-side vectors.
pub fn train_skipgram<T: Real>(corpus: &WalkCorpus, cfg: &SkipGramConfig, method: &str) -> Result<EmbeddingMatrix<T>> {
    let trainer = SkipGramTrainer::<T>::new(corpus, cfg)?;
    for epoch in 0..cfg.epochs {
        trainer.train_epoch(corpus, epoch);
    }
    trainer.into_embedding(corpus, method)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{InteractionGraph, UserId};
    use crate::scalar::dot;
    use crate::walk::{generate_walks, WalkConfig};

    fn two_cliques() -> InteractionGraph {
        let mut recs = Vec::new();
        for base in [0u64, 4] {
            for a in 0..4 {
                for b in 0..4 {
                    if a != b {
                        recs.push((UserId(base + a), UserId(base + b), 1));
                    }
                }
            }
        }
        recs.push((UserId(3), UserId(4), 1));
        InteractionGraph::from_records(recs).unwrap()
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b) / (dot(a, a).sqrt() * dot(b, b).sqrt())
    }

    fn similarity_gap(m: &EmbeddingMatrix<f64>) -> f64 {
        let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
        for a in 0..8u64 {
            for b in (a + 1)..8u64 {
                let c = cosine(m.get(UserId(a)).unwrap(), m.get(UserId(b)).unwrap());
                if (a < 4) == (b < 4) {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    nx += 1;
                }
            }
        }
        intra / ni as f64 - inter / nx as f64
    }

    fn small_cfg(seed: u64) -> (WalkConfig, SkipGramConfig) {
        let walk = WalkConfig { walks_per_node: 20, walk_length: 20, window: 3, seed, ..WalkConfig::deepwalk() };
        let sg = SkipGramConfig { dim: 8, window: 3, epochs: 5, seed, ..Default::default() };
        (walk, sg)
    }

    #[test]
    fn planted_cliques_separate() {
        let g = two_cliques();
        for seed in [1, 2] {
            let (w, s) = small_cfg(seed);
            let corpus = generate_walks(&g, &w).unwrap();
            let m = train_skipgram::<f64>(&corpus, &s, "deepwalk").unwrap();
            assert_eq!(m.len(), 8);
            let gap = similarity_gap(&m);
            assert!(gap > 0.0, "seed {seed}: gap {gap}");
        }
    }

    #[test]
    fn probe_loss_decreases() {
        let g = two_cliques();
        let (w, mut s) = small_cfg(3);
        s.epochs = 1;
        let corpus = generate_walks(&g, &w).unwrap();
        let t = SkipGramTrainer::<f64>::new(&corpus, &s).unwrap();
        let probes = t.sample_probes(&corpus, 200, 9);
        let before = t.probe_loss(&probes);
        t.train_epoch(&corpus, 0);
        let after = t.probe_loss(&probes);
        assert!(after < before, "{after} >= {before}");
    }

    #[test]
    fn deterministic_mode_is_bit_identical() {
        let g = two_cliques();
        let (w, s) = small_cfg(4);
        let corpus = generate_walks(&g, &w).unwrap();
        let a = train_skipgram::<f32>(&corpus, &s, "deepwalk").unwrap();
        let b = train_skipgram::<f32>(&corpus, &s, "deepwalk").unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn parallel_mode_meets_same_property() {
        let g = two_cliques();
        let (w, mut s) = small_cfg(5);
        s.workers = 3;
        let corpus = generate_walks(&g, &w).unwrap();
        let m = train_skipgram::<f64>(&corpus, &s, "deepwalk").unwrap();
        assert!(m.all_finite());
        assert!(similarity_gap(&m) > 0.0);
    }

    #[test]
    fn bad_config_rejected() {
        let g = two_cliques();
        let corpus = generate_walks(&g, &WalkConfig::default()).unwrap();
        for cfg in [
            SkipGramConfig { dim: 0, ..Default::default() },
            SkipGramConfig { negatives: 0, ..Default::default() },
            SkipGramConfig { initial_lr: 0.0, ..Default::default() },
            SkipGramConfig { ns_power: 1.5, ..Default::default() },
        ] {
            assert!(train_skipgram::<f64>(&corpus, &cfg, "x").is_err());
        }
        let empty = WalkCorpus::from_sequences(vec![], vec![]);
        assert!(train_skipgram::<f64>(&empty, &SkipGramConfig::default(), "x").is_err());
    }
}
