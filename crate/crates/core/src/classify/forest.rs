use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng::{self, StageRng};
use crate::{Real, Result};

/// Gini impurity of a class-count vector.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

/// Size-weighted Gini impurity of a set of children.
pub fn weighted_gini(children: &[&[usize]]) -> f64 {
    let total: usize = children.iter().map(|c| c.iter().sum::<usize>()).sum();
    children
        .iter()
        .map(|c| c.iter().sum::<usize>() as f64 / total as f64 * gini(c))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf { class: usize, counts: Vec<usize> },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// CART classification tree with Gini splits; `x[f] <= threshold` goes left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct Grower<'a> {
    x: &'a [f64],
    d: usize,
    y: &'a [usize],
    k: usize,
    max_depth: Option<usize>,
    mtry: usize,
}

impl Grower<'_> {
    fn counts(&self, samples: &[usize]) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &i in samples {
            c[self.y[i]] += 1;
        }
        c
    }

    fn best_split(&self, samples: &[usize], r: &mut StageRng) -> Option<(usize, f64, f64)> {
        let mut order: Vec<usize> = (0..self.d).collect();
        if self.mtry < self.d {
            order.shuffle(r);
        }
        let parent = self.counts(samples);
        let n = samples.len() as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut visited = 0;
        let mut sorted = samples.to_vec();
        for &f in &order {
            if visited >= self.mtry {
                break;
            }
            let val = |i: usize| self.x[i * self.d + f];
            sorted.sort_by(|&a, &b| val(a).total_cmp(&val(b)).then(a.cmp(&b)));
            if val(sorted[0]) == val(sorted[sorted.len() - 1]) {
                continue;
            }
            visited += 1;
            let mut left = vec![0usize; self.k];
            let mut right = parent.clone();
            for pos in 0..sorted.len() - 1 {
                let c = self.y[sorted[pos]];
                left[c] += 1;
                right[c] -= 1;
                let (a, b) = (val(sorted[pos]), val(sorted[pos + 1]));
                if a == b {
                    continue;
                }
                let nl = (pos + 1) as f64;
                let score = (nl * gini(&left) + (n - nl) * gini(&right)) / n;
                if best.map_or(true, |(_, _, s)| score < s) {
                    let mid = a + (b - a) / 2.0;
                    let thr = if mid < b { mid } else { a };
                    best = Some((f, thr, score));
                }
            }
        }
        best
    }

    fn grow(&self, samples: Vec<usize>, r: &mut StageRng) -> DecisionTree {
        let mut nodes = Vec::new();
        let mut stack = vec![(samples, 0usize, usize::MAX, false)];
        while let Some((s, depth, parent, is_right)) = stack.pop() {
            let counts = self.counts(&s);
            let id = nodes.len();
            let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
            let capped = self.max_depth.map_or(false, |m| depth >= m);
            let split = if pure || capped || s.len() < 2 { None } else { self.best_split(&s, r) };
            match split {
                None => nodes.push(TreeNode::Leaf {
                    class: majority(&counts),
                    counts,
                }),
                Some((feature, threshold, _)) => {
                    nodes.push(TreeNode::Split {
                        feature,
                        threshold,
                        left: 0,
                        right: 0,
                    });
                    let (l, rt): (Vec<usize>, Vec<usize>) =
                        s.iter().partition(|&&i| self.x[i * self.d + feature] <= threshold);
                    // right pushed first so the left subtree is numbered first
                    stack.push((rt, depth + 1, id, true));
                    stack.push((l, depth + 1, id, false));
                }
            }
            if parent != usize::MAX {
                if let TreeNode::Split { left, right, .. } = &mut nodes[parent] {
                    if is_right {
                        *right = id;
                    } else {
                        *left = id;
                    }
                }
            }
        }
        DecisionTree { nodes }
    }
}

impl DecisionTree {
    /// Grow a tree on `samples` (indices into row-major `x`, repeats allowed).
    #[allow(clippy::too_many_arguments)]
    pub fn fit(
        x: &[f64],
        d: usize,
        y: &[usize],
        k: usize,
        samples: Vec<usize>,
        max_depth: Option<usize>,
        mtry: usize,
        r: &mut StageRng,
    ) -> Self {
        let g = Grower {
            x,
            d,
            y,
            k,
            max_depth,
            mtry: mtry.clamp(1, d),
        };
        g.grow(samples, r)
    }

    /// Plain CART on every row with all features considered at each split.
    pub fn fit_dataset<T: Real>(data: &Dataset<T>, max_depth: Option<usize>) -> Self {
        let x = data.features_f64();
        let d = data.dim();
        Self::fit(
            &x,
            d,
            data.labels(),
            data.num_classes(),
            (0..data.len()).collect(),
            max_depth,
            d,
            &mut rng::stream(0, &[]),
        )
    }

    pub fn predict<T: Real>(&self, x: &[T]) -> usize {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature].as_f64() <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.nodes.len() == 1
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: Option<usize>,
    /// Features tried per split; `None` means `floor(sqrt(d))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 100,
            max_depth: None,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<DecisionTree>,
    pub num_classes: usize,
    /// Out-of-bag accuracy over samples left out by at least one tree.
    pub oob_accuracy: Option<f64>,
}

impl Forest {
    pub fn fit<T: Real>(data: &Dataset<T>, cfg: &ForestConfig) -> Result<Self> {
        if cfg.trees == 0 {
            return Err(crate::Error::config("forest needs at least one tree"));
        }
        let (n, d, k) = (data.len(), data.dim(), data.num_classes());
        let x = data.features_f64();
        let y = data.labels();
        let mtry = cfg
            .features_per_split
            .unwrap_or_else(|| ((d as f64).sqrt().floor() as usize).max(1));
        let grown: Vec<(DecisionTree, Vec<bool>)> = (0..cfg.trees)
            .into_par_iter()
            .map(|t| {
                let mut r = rng::stream(cfg.seed, &[0x7EE, t as u64]);
                let mut in_bag = vec![!cfg.bootstrap; n];
                let samples: Vec<usize> = if cfg.bootstrap {
                    (0..n)
                        .map(|_| {
                            let i = r.gen_range(0..n);
                            in_bag[i] = true;
                            i
                        })
                        .collect()
                } else {
                    (0..n).collect()
                };
                let tree = DecisionTree::fit(&x, d, y, k, samples, cfg.max_depth, mtry, &mut r);
                (tree, in_bag)
            })
            .collect();
        let oob_accuracy = cfg.bootstrap.then(|| {
            let mut hits = 0usize;
            let mut scored = 0usize;
            for i in 0..n {
                let mut votes = vec![0usize; k];
                for (tree, in_bag) in &grown {
                    if !in_bag[i] {
                        votes[tree.predict(&x[i * d..(i + 1) * d])] += 1;
                    }
                }
                if votes.iter().any(|&v| v > 0) {
                    scored += 1;
                    hits += usize::from(majority(&votes) == y[i]);
                }
            }
            if scored == 0 {
                f64::NAN
            } else {
                hits as f64 / scored as f64
            }
        });
        Ok(Forest {
            trees: grown.into_iter().map(|(t, _)| t).collect(),
            num_classes: k,
            oob_accuracy: oob_accuracy.filter(|v| v.is_finite()),
        })
    }

    fn votes<T: Real>(&self, x: &[T]) -> Vec<usize> {
        let mut v = vec![0; self.num_classes];
        for t in &self.trees {
            v[t.predict(x)] += 1;
        }
        v
    }

    pub fn vote_fractions<T: Real>(&self, x: &[T]) -> Vec<f64> {
        let total = self.trees.len() as f64;
        self.votes(x).into_iter().map(|v| v as f64 / total).collect()
    }

    /// Majority vote; ties go to the lowest class index.
    pub fn predict<T: Real>(&self, x: &[T]) -> usize {
        majority(&self.votes(x))
    }
}

#[cfg(test)]
mod tests {
    use super::super::{train_rf, ModelParams};
    use super::*;

    #[test]
    fn gini_of_split() {
        assert!((weighted_gini(&[&[2, 2], &[4, 0]]) - 0.25).abs() < 1e-15);
        assert_eq!(gini(&[3, 0]), 0.0);
        assert!((gini(&[1, 1]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pure_data_gives_leaves() {
        let d = Dataset::new(vec![0.0f64, 1.0, 2.0, 3.0], 2, vec![1, 1], vec!["a".into(), "b".into()]).unwrap();
        let m = train_rf(&d, &ForestConfig::default()).unwrap();
        let ModelParams::Rf(f) = &m.params else { panic!() };
        assert!(f.trees.iter().all(|t| t.is_leaf()));
        assert_eq!(m.predict(&[10.0f64, -3.0]), 1);
    }

    #[test]
    fn xor_is_learned() {
        let x = vec![0.0f64, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0];
        let d = Dataset::new(x, 2, vec![0, 1, 1, 0], vec!["a".into(), "b".into()]).unwrap();
        let tree = DecisionTree::fit_dataset(&d, Some(2));
        for i in 0..4 {
            assert_eq!(tree.predict(d.row(i)), d.labels()[i]);
        }
        let cfg = ForestConfig {
            bootstrap: false,
            features_per_split: Some(2),
            ..Default::default()
        };
        assert_eq!(train_rf(&d, &cfg).unwrap().accuracy(&d), 1.0);
    }

    #[test]
    fn single_unbagged_tree_equals_cart() {
        let mut r = rng::stream(3, &[]);
        let x: Vec<f64> = (0..60 * 3).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y: Vec<usize> = x.chunks(3).map(|v| usize::from(v[0] + 0.5 * v[1] > 0.1) + usize::from(v[2] > 0.6)).collect();
        let d = Dataset::new(x, 3, y, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let cfg = ForestConfig {
            trees: 1,
            bootstrap: false,
            features_per_split: Some(3),
            seed: 9,
            ..Default::default()
        };
        let forest = train_rf(&d, &cfg).unwrap();
        let tree = DecisionTree::fit_dataset(&d, None);
        let ModelParams::Rf(f) = &forest.params else { panic!() };
        assert_eq!(f.trees[0], tree);
        for _ in 0..200 {
            let p = [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
            assert_eq!(forest.predict(&p), tree.predict(&p));
        }
    }

    #[test]
    fn deterministic_with_oob_and_proba() {
        let mut r = rng::stream(5, &[]);
        let x: Vec<f64> = (0..80).map(|_| r.gen_range(-1.0..1.0)).collect();
        let y: Vec<usize> = x.chunks(2).map(|v| usize::from(v[0] > 0.0)).collect();
        let d = Dataset::new(x, 2, y, vec!["a".into(), "b".into()]).unwrap();
        let cfg = ForestConfig { trees: 30, seed: 4, ..Default::default() };
        let a = train_rf(&d, &cfg).unwrap();
        let b = train_rf(&d, &cfg).unwrap();
        assert_eq!(a, b);
        let ModelParams::Rf(f) = &a.params else { panic!() };
        assert!(f.oob_accuracy.unwrap() > 0.8);
        let p = a.predict_proba(&[0.3f64, 0.2]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}
