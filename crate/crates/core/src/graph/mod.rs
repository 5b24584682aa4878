//! Retweet interaction graphs and labeled user tiers.

mod io;
mod labels;

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use io::{export_edges, ingest_edges, read_edges, write_edges, EdgeFormat};
pub use labels::{
    ingest_catalog, ingest_labels, ingest_labels_with_catalog, read_labels, write_catalog,
    write_labels, Label, LabelSet, PartyEntry, Tier,
};

/// Opaque external user identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u64);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One aggregated source -> target retweet relation. `source` retweeted
/// `target` exactly `count` times.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct RetweetEdge {
    pub source: UserId,
    pub target: UserId,
    pub count: u64,
}

impl RetweetEdge {
    pub fn is_self_retweet(&self) -> bool {
        self.source == self.target
    }
}

/// Edge over dense internal indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct DenseEdge {
    pub source: u32,
    pub target: u32,
    pub count: u64,
}

/// Compressed adjacency rows with cumulative weights for O(log deg)
/// weighted neighbor sampling.
#[derive(Clone, Debug, Default)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    cumulative: Vec<u64>,
}

impl Adjacency {
    fn build(n: usize, edges: impl Iterator<Item = (u32, u32, u64)> + Clone) -> Self {
        let mut offsets = vec![0usize; n + 1];
        for (u, _, _) in edges.clone() {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let m = offsets[n];
        let mut fill = offsets.clone();
        let mut neighbors = vec![0u32; m];
        let mut weights = vec![0u64; m];
        for (u, v, w) in edges {
            let slot = &mut fill[u as usize];
            neighbors[*slot] = v;
            weights[*slot] = w;
            *slot += 1;
        }
        let mut cumulative = vec![0u64; m];
        for u in 0..n {
            let mut acc = 0u64;
            for k in offsets[u]..offsets[u + 1] {
                acc += weights[k];
                cumulative[k] = acc;
            }
        }
        Adjacency {
            offsets,
            neighbors,
            cumulative,
        }
    }

    pub fn degree(&self, u: u32) -> usize {
        self.offsets[u as usize + 1] - self.offsets[u as usize]
    }

    pub fn neighbors(&self, u: u32) -> &[u32] {
        &self.neighbors[self.offsets[u as usize]..self.offsets[u as usize + 1]]
    }

    /// Neighbor / weight pairs of `u`.
    pub fn weighted(&self, u: u32) -> impl Iterator<Item = (u32, u64)> + '_ {
        let range = self.offsets[u as usize]..self.offsets[u as usize + 1];
        let base = range.start;
        range.map(move |k| {
            let prev = if k == base { 0 } else { self.cumulative[k - 1] };
            (self.neighbors[k], self.cumulative[k] - prev)
        })
    }

    pub fn total_weight(&self, u: u32) -> u64 {
        let (s, e) = (self.offsets[u as usize], self.offsets[u as usize + 1]);
        if s == e {
            0
        } else {
            self.cumulative[e - 1]
        }
    }

    /// Sample a neighbor proportionally to weight given `r` uniform in [0, 1).
    pub fn sample(&self, u: u32, r: f64) -> Option<u32> {
        let (s, e) = (self.offsets[u as usize], self.offsets[u as usize + 1]);
        if s == e {
            return None;
        }
        let total = self.cumulative[e - 1];
        let x = ((r * total as f64) as u64).min(total - 1);
        let rows = &self.cumulative[s..e];
        let k = rows.partition_point(|&c| c <= x);
        Some(self.neighbors[s + k])
    }
}

/// Directed retweet multigraph with users remapped to dense indices
/// `0..N` in ascending external id order.
#[derive(Clone, Debug, Default)]
pub struct InteractionGraph {
    users: Vec<UserId>,
    index: HashMap<UserId, u32>,
    edges: Vec<DenseEdge>,
    out_adj: Adjacency,
    in_adj: Adjacency,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphStats {
    pub users: usize,
    pub edges: usize,
    pub retweets: u64,
    pub self_retweets: u64,
}

impl InteractionGraph {
    /// Build from raw (source, target, count) records. Duplicate pairs are
    /// summed; zero counts are rejected.
    pub fn from_records<I>(records: I) -> crate::Result<Self>
    where
        I: IntoIterator<Item = (UserId, UserId, u64)>,
    {
        Self::from_records_with_users(records, std::iter::empty())
    }

    /// Like [`from_records`](Self::from_records) but also registers
    /// `extra_users` that may have no edges.
    pub fn from_records_with_users<I, U>(records: I, extra_users: U) -> crate::Result<Self>
    where
        I: IntoIterator<Item = (UserId, UserId, u64)>,
        U: IntoIterator<Item = UserId>,
    {
        let mut agg: HashMap<(UserId, UserId), u64> = HashMap::new();
        let mut users: Vec<UserId> = extra_users.into_iter().collect();
        for (s, t, c) in records {
            if c == 0 {
                return Err(crate::Error::data(format!(
                    "edge {s} -> {t} has zero count"
                )));
            }
            *agg.entry((s, t)).or_insert(0) += c;
            users.push(s);
            users.push(t);
        }
        users.sort_unstable();
        users.dedup();
        let index: HashMap<UserId, u32> = users
            .iter()
            .enumerate()
            .map(|(i, &u)| (u, i as u32))
            .collect();
        let mut edges: Vec<DenseEdge> = agg
            .into_iter()
            .map(|((s, t), count)| DenseEdge {
                source: index[&s],
                target: index[&t],
                count,
            })
            .collect();
        edges.sort_unstable();
        Ok(Self::from_parts(users, index, edges))
    }

    fn from_parts(users: Vec<UserId>, index: HashMap<UserId, u32>, edges: Vec<DenseEdge>) -> Self {
        let n = users.len();
        let out_adj = Adjacency::build(n, edges.iter().map(|e| (e.source, e.target, e.count)));
        let in_adj = Adjacency::build(n, edges.iter().map(|e| (e.target, e.source, e.count)));
        InteractionGraph {
            users,
            index,
            edges,
            out_adj,
            in_adj,
        }
    }

    /// Same users and pairs with every multiplicity collapsed to one.
    pub fn deduplicated(&self) -> Self {
        let edges = self
            .edges
            .iter()
            .map(|e| DenseEdge { count: 1, ..*e })
            .collect();
        Self::from_parts(self.users.clone(), self.index.clone(), edges)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Users in ascending id order; position is the dense index.
    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn user(&self, idx: u32) -> UserId {
        self.users[idx as usize]
    }

    pub fn index_of(&self, id: UserId) -> Option<u32> {
        self.index.get(&id).copied()
    }

    pub fn dense_edges(&self) -> &[DenseEdge] {
        &self.edges
    }

    /// Edges with external ids, sorted by (source, target).
    pub fn edges(&self) -> impl Iterator<Item = RetweetEdge> + '_ {
        self.edges.iter().map(|e| RetweetEdge {
            source: self.users[e.source as usize],
            target: self.users[e.target as usize],
            count: e.count,
        })
    }

    pub fn out_adjacency(&self) -> &Adjacency {
        &self.out_adj
    }

    pub fn in_adjacency(&self) -> &Adjacency {
        &self.in_adj
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            users: self.users.len(),
            edges: self.edges.len(),
            retweets: self.edges.iter().map(|e| e.count).sum(),
            self_retweets: self
                .edges
                .iter()
                .filter(|e| e.source == e.target)
                .map(|e| e.count)
                .sum(),
        }
    }

    /// Every retweet as a (source, target) pair, each edge repeated
    /// `count` times.
    pub fn edge_pairs(&self) -> impl Iterator<Item = (UserId, UserId)> + '_ {
        self.edges().flat_map(|e| {
            std::iter::repeat((e.source, e.target)).take(e.count as usize)
        })
    }

    /// Dense-index pairs with multiplicity, optionally dropping self-retweets.
    pub fn dense_pairs(&self, include_self: bool) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for e in &self.edges {
            if !include_self && e.source == e.target {
                continue;
            }
            out.extend(std::iter::repeat((e.source, e.target)).take(e.count as usize));
        }
        out
    }
}
