//! Uniform (DeepWalk) and second-order biased (node2vec) random walks over
//! the undirected, retweet-count-weighted view of an interaction graph.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::graph::{InteractionGraph, UserId};
use crate::{rng, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    /// Return parameter.
    pub p: f64,
    /// In-out parameter.
    pub q: f64,
    /// Treat every edge as weight 1 instead of its retweet count.
    pub binary_edges: bool,
    pub include_self_loops: bool,
    pub seed: u64,
}

impl Default for WalkConfig {
    /// Unbiased walks (p = q = 1).
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 10,
            walk_length: 80,
            window: 10,
            p: 1.0,
            q: 1.0,
            binary_edges: false,
            include_self_loops: false,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn deepwalk() -> Self {
        Self::default()
    }

    pub fn node2vec() -> Self {
        WalkConfig {
            p: 1.0,
            q: 0.5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.walks_per_node < 1 {
            return Err(Error::config("walks_per_node must be >= 1"));
        }
        if self.walk_length < 2 {
            return Err(Error::config("walk_length must be >= 2"));
        }
        if self.window < 1 {
            return Err(Error::config("window must be >= 1"));
        }
        if !(self.p > 0.0 && self.p.is_finite()) || !(self.q > 0.0 && self.q.is_finite()) {
            return Err(Error::config("p and q must be positive and finite"));
        }
        Ok(())
    }

    fn unbiased(&self) -> bool {
        self.p == 1.0 && self.q == 1.0
    }
}

/// Undirected weighted adjacency with sorted neighbor rows.
#[derive(Clone, Debug)]
pub struct WalkGraph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl WalkGraph {
    /// `u -> v` and `v -> u` retweets merge into one undirected edge whose
    /// weight is their summed count (or 1 with `binary_edges`).
    pub fn build(graph: &InteractionGraph, binary_edges: bool, include_self_loops: bool) -> Self {
        let n = graph.num_users();
        let mut pairs: Vec<(u32, u32, u64)> = Vec::with_capacity(graph.dense_edges().len() * 2);
        for e in graph.dense_edges() {
            if e.source == e.target {
                if include_self_loops {
                    pairs.push((e.source, e.target, e.count));
                }
                continue;
            }
            pairs.push((e.source, e.target, e.count));
            pairs.push((e.target, e.source, e.count));
        }
        pairs.sort_unstable_by_key(|&(u, v, _)| (u, v));
        let mut offsets = vec![0usize; n + 1];
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        let mut i = 0;
        while i < pairs.len() {
            let (u, v, _) = pairs[i];
            let mut w = 0u64;
            while i < pairs.len() && pairs[i].0 == u && pairs[i].1 == v {
                w += pairs[i].2;
                i += 1;
            }
            neighbors.push(v);
            weights.push(if binary_edges { 1.0 } else { w as f64 });
            offsets[u as usize + 1] += 1;
        }
        for k in 0..n {
            offsets[k + 1] += offsets[k];
        }
        let mut cumulative = vec![0.0; weights.len()];
        for u in 0..n {
            let mut acc = 0.0;
            for k in offsets[u]..offsets[u + 1] {
                acc += weights[k];
                cumulative[k] = acc;
            }
        }
        WalkGraph {
            offsets,
            neighbors,
            weights,
            cumulative,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.neighbors[self.offsets[u as usize]..self.offsets[u as usize + 1]]
    }

    pub fn weights(&self, u: u32) -> &[f64] {
        &self.weights[self.offsets[u as usize]..self.offsets[u as usize + 1]]
    }

    pub fn degree(&self, u: u32) -> usize {
        self.offsets[u as usize + 1] - self.offsets[u as usize]
    }

    pub fn is_adjacent(&self, u: u32, v: u32) -> bool {
        self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn edge_weight(&self, u: u32, v: u32) -> f64 {
        match self.neighbors(u).binary_search(&v) {
            Ok(k) => self.weights(u)[k],
            Err(_) => 0.0,
        }
    }

    fn sample_neighbor<R: Rng + ?Sized>(&self, u: u32, rng: &mut R) -> u32 {
        let (s, e) = (self.offsets[u as usize], self.offsets[u as usize + 1]);
        let total = self.cumulative[e - 1];
        let x = rng.gen::<f64>() * total;
        let k = self.cumulative[s..e].partition_point(|&c| c <= x).min(e - s - 1);
        self.neighbors[s + k]
    }
}

/// Second-order bias of stepping from `cur` to `next` after arriving from
/// `prev`.
#[inline]
fn bias(graph: &WalkGraph, prev: u32, next: u32, p: f64, q: f64) -> f64 {
    if next == prev {
        1.0 / p
    } else if graph.is_adjacent(prev, next) {
        1.0
    } else {
        1.0 / q
    }
}

/// Unnormalized transition weights out of `cur`: edge weight times the
/// node2vec bias (1/p back to `prev`, 1 to neighbors of `prev`, 1/q
/// elsewhere). Without `prev` the bias is 1. Isolated nodes yield an empty
/// distribution.
pub fn transition_weights(
    graph: &WalkGraph,
    prev: Option<u32>,
    cur: u32,
    p: f64,
    q: f64,
) -> Vec<(u32, f64)> {
    graph
        .neighbors(cur)
        .iter()
        .zip(graph.weights(cur))
        .map(|(&x, &w)| {
            let b = prev.map_or(1.0, |t| bias(graph, t, x, p, q));
            (x, w * b)
        })
        .collect()
}

/// Walk sequences over dense node indices plus per-node visit counts.
#[derive(Clone, Debug)]
pub struct WalkCorpus {
    tokens: Vec<u32>,
    offsets: Vec<usize>,
    counts: Vec<u64>,
    users: Vec<UserId>,
}

impl WalkCorpus {
    pub fn from_sequences(users: Vec<UserId>, sequences: Vec<Vec<u32>>) -> Self {
        let mut tokens = Vec::new();
        let mut offsets = vec![0];
        let mut counts = vec![0u64; users.len()];
        for s in sequences {
            for &t in &s {
                counts[t as usize] += 1;
            }
            tokens.extend(s);
            offsets.push(tokens.len());
        }
        WalkCorpus {
            tokens,
            offsets,
            counts,
            users,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sequence(&self, i: usize) -> &[u32] {
        &self.tokens[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn sequences(&self) -> impl Iterator<Item = &[u32]> {
        (0..self.len()).map(|i| self.sequence(i))
    }

    pub fn num_tokens(&self) -> usize {
        self.tokens.len()
    }

    /// Visit count of every node of the source graph.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// External id of a dense node index.
    pub fn users(&self) -> &[UserId] {
        &self.users
    }
}

fn walk_from<R: Rng + ?Sized>(graph: &WalkGraph, start: u32, cfg: &WalkConfig, rng: &mut R) -> Vec<u32> {
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start);
    if graph.degree(start) == 0 {
        return walk;
    }
    let unbiased = cfg.unbiased();
    let max_bias = (1.0 / cfg.p).max(1.0).max(1.0 / cfg.q);
    while walk.len() < cfg.walk_length {
        let cur = *walk.last().unwrap();
        let next = match (walk.len() >= 2, unbiased) {
            (false, _) | (true, true) => graph.sample_neighbor(cur, rng),
            (true, false) => {
                let prev = walk[walk.len() - 2];
                // rejection sampling against the edge-weight proposal is
                // exact for the biased distribution
                loop {
                    let x = graph.sample_neighbor(cur, rng);
                    let b = bias(graph, prev, x, cfg.p, cfg.q);
                    if rng.gen::<f64>() * max_bias < b {
                        break x;
                    }
                }
            }
        };
        walk.push(next);
    }
    walk
}

/// `walks_per_node` walks from every non-isolated node. Each start node
/// owns an RNG stream derived from the seed and its index, so the corpus is
/// identical for any thread count. Sequences are ordered round by round,
/// with start nodes shuffled within each round.
pub fn generate_walks(graph: &InteractionGraph, cfg: &WalkConfig) -> Result<WalkCorpus> {
    cfg.validate()?;
    if graph.is_empty() {
        return Err(Error::config("cannot walk an empty graph"));
    }
    let wg = WalkGraph::build(graph, cfg.binary_edges, cfg.include_self_loops);
    Ok(generate_walks_on(&wg, graph.users().to_vec(), cfg))
}

pub fn generate_walks_on(wg: &WalkGraph, users: Vec<UserId>, cfg: &WalkConfig) -> WalkCorpus {
    let starts: Vec<u32> = (0..wg.num_nodes() as u32).filter(|&u| wg.degree(u) > 0).collect();
    let per_node: Vec<Vec<Vec<u32>>> = starts
        .par_iter()
        .map(|&s| {
            let mut r = rng::stream(cfg.seed, &[0x57A1, s as u64]);
            (0..cfg.walks_per_node).map(|_| walk_from(wg, s, cfg, &mut r)).collect()
        })
        .collect();
    let mut order_rng = rng::stream(cfg.seed, &[0x0DE5]);
    let mut sequences = Vec::with_capacity(starts.len() * cfg.walks_per_node);
    let mut order: Vec<usize> = (0..starts.len()).collect();
    let mut per_node = per_node;
    for round in 0..cfg.walks_per_node {
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut order_rng);
        for &i in &order {
            sequences.push(std::mem::take(&mut per_node[i][round]));
        }
    }
    WalkCorpus::from_sequences(users, sequences)
}
