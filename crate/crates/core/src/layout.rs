//! ForceAtlas2 force-directed layout. Connected users attract linearly with
//! distance, every pair repels with `k_r (deg_u + 1)(deg_v + 1) / d`, and a
//! degree-weighted gravity pulls toward the origin. Step sizes adapt
//! globally from the swinging/traction balance and locally per node.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::{EmbeddingMatrix, EmbeddingMeta};
use crate::graph::{InteractionGraph, UserId};
use crate::{rng, Error, Real, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fa2Config {
    pub iterations: usize,
    /// Repulsion scaling `k_r`.
    pub scaling: f64,
    pub gravity: f64,
    pub linlog: bool,
    /// Accepted for compatibility; users have no size so it changes nothing.
    pub prevent_overlap: bool,
    /// Barnes-Hut opening angle; 0 forces exact repulsion.
    pub barnes_hut_theta: f64,
    /// Barnes-Hut is used only for graphs with more nodes than this.
    pub barnes_hut_min_nodes: usize,
    /// Jitter tolerance of the adaptive speed.
    pub tolerance: f64,
    /// Scale attraction by retweet count.
    pub weighted: bool,
    pub seed: u64,
}

impl Default for Fa2Config {
    fn default() -> Self {
        Fa2Config {
            iterations: 1000,
            scaling: 2.0,
            gravity: 1.0,
            linlog: false,
            prevent_overlap: false,
            barnes_hut_theta: 1.2,
            barnes_hut_min_nodes: 10_000,
            tolerance: 1.0,
            weighted: true,
            seed: 0,
        }
    }
}

impl Fa2Config {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::config("iterations must be >= 1"));
        }
        if !(self.scaling > 0.0) {
            return Err(Error::config("scaling (k_r) must be positive"));
        }
        if !(self.gravity >= 0.0) {
            return Err(Error::config("gravity must be non-negative"));
        }
        if !(0.0..=1.5).contains(&self.barnes_hut_theta) {
            return Err(Error::config("barnes_hut_theta must lie in [0, 1.5]"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("tolerance must be positive"));
        }
        Ok(())
    }

    fn uses_barnes_hut(&self, n: usize) -> bool {
        self.barnes_hut_theta > 0.0 && n > self.barnes_hut_min_nodes
    }
}

/// Undirected simple graph with node masses `deg + 1`.
#[derive(Clone, Debug)]
pub struct Fa2Graph {
    pub edges: Vec<(u32, u32, f64)>,
    pub mass: Vec<f64>,
}

impl Fa2Graph {
    pub fn from_interactions(graph: &InteractionGraph, weighted: bool) -> Self {
        let mut pairs: Vec<(u32, u32, u64)> = graph
            .dense_edges()
            .iter()
            .filter(|e| e.source != e.target)
            .map(|e| (e.source.min(e.target), e.source.max(e.target), e.count))
            .collect();
        pairs.sort_unstable_by_key(|&(a, b, _)| (a, b));
        let mut edges: Vec<(u32, u32, f64)> = Vec::new();
        for (a, b, c) in pairs {
            match edges.last_mut() {
                Some(last) if last.0 == a && last.1 == b => last.2 += c as f64,
                _ => edges.push((a, b, c as f64)),
            }
        }
        if !weighted {
            edges.iter_mut().for_each(|e| e.2 = 1.0);
        }
        Self::from_edges(graph.num_users(), edges)
    }

    /// `edges` must be simple and undirected (each pair once).
    pub fn from_edges(n: usize, edges: Vec<(u32, u32, f64)>) -> Self {
        let mut mass = vec![1.0; n];
        for &(a, b, _) in &edges {
            mass[a as usize] += 1.0;
            mass[b as usize] += 1.0;
        }
        Fa2Graph { edges, mass }
    }

    pub fn num_nodes(&self) -> usize {
        self.mass.len()
    }
}

/// Positions plus the adaptive-speed state carried between steps.
#[derive(Clone, Debug)]
pub struct Fa2State<T> {
    pub positions: Vec<[T; 2]>,
    prev_forces: Vec<[T; 2]>,
    speed: T,
    speed_efficiency: T,
}

impl<T: Real> Fa2State<T> {
    pub fn new(positions: Vec<[T; 2]>) -> Self {
        let n = positions.len();
        Fa2State {
            positions,
            prev_forces: vec![[T::zero(); 2]; n],
            speed: T::one(),
            speed_efficiency: T::one(),
        }
    }

    /// Uniform positions in [-1, 1]^2.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[0xFA2]);
        Self::new(
            (0..n)
                .map(|_| [T::lit(r.gen_range(-1.0..1.0)), T::lit(r.gen_range(-1.0..1.0))])
                .collect(),
        )
    }
}

const COINCIDENT: f64 = 1e-9;
/// Distance at which coincident pairs are treated for repulsion.
const COINCIDENT_SPREAD: f64 = 0.01;

/// Seeded direction for a coincident pair, antisymmetric in (i, j).
fn jitter_direction<T: Real>(seed: u64, i: usize, j: usize, step: usize) -> [T; 2] {
    let (a, b) = (i.min(j) as u64, i.max(j) as u64);
    let h = rng::derive(seed, &[0x7177, a, b, step as u64]);
    let angle = rng::unit_from_hash(h) * std::f64::consts::TAU;
    let sign = if i < j { 1.0 } else { -1.0 };
    [T::lit(sign * angle.cos()), T::lit(sign * angle.sin())]
}

/// Repulsion on `i` from a body of mass `m` at `at`.
#[inline]
fn repel<T: Real>(xi: [T; 2], mi: T, at: [T; 2], m: T, kr: T, jitter: impl FnOnce() -> [T; 2]) -> [T; 2] {
    let dx = xi[0] - at[0];
    let dy = xi[1] - at[1];
    let d2 = dx * dx + dy * dy;
    if d2 < T::lit(COINCIDENT * COINCIDENT) {
        let u = jitter();
        let f = kr * mi * m / T::lit(COINCIDENT_SPREAD);
        return [u[0] * f, u[1] * f];
    }
    let f = kr * mi * m / d2;
    [dx * f, dy * f]
}

/// Exact pairwise repulsion on every node.
pub fn repulsion_exact<T: Real>(graph: &Fa2Graph, positions: &[[T; 2]], kr: f64, seed: u64, step: usize) -> Vec<[T; 2]> {
    let kr = T::lit(kr);
    let n = positions.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mi = T::lit(graph.mass[i]);
            let mut f = [T::zero(); 2];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let r = repel(positions[i], mi, positions[j], T::lit(graph.mass[j]), kr, || {
                    jitter_direction(seed, i, j, step)
                });
                f[0] += r[0];
                f[1] += r[1];
            }
            f
        })
        .collect()
}

const NONE: u32 = u32::MAX;
const MAX_DEPTH: usize = 48;

#[derive(Clone, Debug)]
struct Cell<T> {
    center: [T; 2],
    half: T,
    mass: T,
    com: [T; 2],
    children: [u32; 4],
    /// Single body stored in a leaf; NONE for internal or aggregated cells.
    body: u32,
    leaf: bool,
}

/// Quadtree over weighted points for Barnes-Hut repulsion.
#[derive(Clone, Debug)]
pub struct QuadTree<T> {
    cells: Vec<Cell<T>>,
}

impl<T: Real> QuadTree<T> {
    pub fn build(positions: &[[T; 2]], mass: &[f64]) -> Self {
        let (mut lo, mut hi) = ([T::infinity(); 2], [T::neg_infinity(); 2]);
        for p in positions {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let two = T::lit(2.0);
        let half = ((hi[0] - lo[0]).max(hi[1] - lo[1]) / two).max(T::lit(1e-6)) * T::lit(1.0001);
        let center = [(lo[0] + hi[0]) / two, (lo[1] + hi[1]) / two];
        let mut tree = QuadTree {
            cells: vec![Cell::empty(center, half)],
        };
        for (i, p) in positions.iter().enumerate() {
            tree.insert(0, i as u32, *p, T::lit(mass[i]), positions, mass, 0);
        }
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn insert(&mut self, cell: usize, body: u32, p: [T; 2], m: T, all: &[[T; 2]], mass: &[f64], depth: usize) {
        let c = &mut self.cells[cell];
        let total = c.mass + m;
        c.com = [
            (c.com[0] * c.mass + p[0] * m) / total,
            (c.com[1] * c.mass + p[1] * m) / total,
        ];
        let was_empty = c.mass == T::zero();
        c.mass = total;
        if c.leaf {
            if was_empty {
                c.body = body;
                return;
            }
            if depth >= MAX_DEPTH {
                c.body = NONE;
                return;
            }
            // split: push the resident body down
            let resident = c.body;
            c.leaf = false;
            c.body = NONE;
            if resident != NONE {
                let rp = all[resident as usize];
                let rm = T::lit(mass[resident as usize]);
                let q = self.child_for(cell, rp);
                self.insert(q, resident, rp, rm, all, mass, depth + 1);
            }
        }
        let q = self.child_for(cell, p);
        self.insert(q, body, p, m, all, mass, depth + 1);
    }

    fn child_for(&mut self, cell: usize, p: [T; 2]) -> usize {
        let (center, half) = (self.cells[cell].center, self.cells[cell].half);
        let east = p[0] >= center[0];
        let north = p[1] >= center[1];
        let k = (east as usize) | ((north as usize) << 1);
        if self.cells[cell].children[k] == NONE {
            let h = half / T::lit(2.0);
            let c = [
                if east { center[0] + h } else { center[0] - h },
                if north { center[1] + h } else { center[1] - h },
            ];
            self.cells.push(Cell::empty(c, h));
            let idx = (self.cells.len() - 1) as u32;
            self.cells[cell].children[k] = idx;
        }
        self.cells[cell].children[k] as usize
    }

    /// Approximate repulsion on body `i`.
    pub fn repulsion(&self, i: usize, xi: [T; 2], mi: T, kr: T, theta: T, seed: u64, step: usize) -> [T; 2] {
        let mut f = [T::zero(); 2];
        let mut stack = vec![0usize];
        while let Some(ci) = stack.pop() {
            let c = &self.cells[ci];
            if c.mass == T::zero() {
                continue;
            }
            if c.leaf && c.body == i as u32 {
                continue;
            }
            let dx = xi[0] - c.com[0];
            let dy = xi[1] - c.com[1];
            let d = (dx * dx + dy * dy).sqrt();
            if c.leaf || (c.half + c.half) < theta * d {
                let j = if c.body == NONE { usize::MAX } else { c.body as usize };
                let r = repel(xi, mi, c.com, c.mass, kr, || jitter_direction(seed, i, j, step));
                f[0] += r[0];
                f[1] += r[1];
            } else {
                stack.extend(c.children.iter().filter(|&&k| k != NONE).map(|&k| k as usize));
            }
        }
        f
    }
}

impl<T: Real> Cell<T> {
    fn empty(center: [T; 2], half: T) -> Self {
        Cell {
            center,
            half,
            mass: T::zero(),
            com: [T::zero(); 2],
            children: [NONE; 4],
            body: NONE,
            leaf: true,
        }
    }
}

pub fn repulsion_barnes_hut<T: Real>(
    graph: &Fa2Graph,
    positions: &[[T; 2]],
    kr: f64,
    theta: f64,
    seed: u64,
    step: usize,
) -> Vec<[T; 2]> {
    let tree = QuadTree::build(positions, &graph.mass);
    let (kr, theta) = (T::lit(kr), T::lit(theta));
    (0..positions.len())
        .into_par_iter()
        .map(|i| tree.repulsion(i, positions[i], T::lit(graph.mass[i]), kr, theta, seed, step))
        .collect()
}

/// Total force on every node for the current positions.
pub fn forces<T: Real>(graph: &Fa2Graph, positions: &[[T; 2]], cfg: &Fa2Config, step: usize) -> Vec<[T; 2]> {
    let n = positions.len();
    let mut f = if cfg.uses_barnes_hut(n) {
        repulsion_barnes_hut(graph, positions, cfg.scaling, cfg.barnes_hut_theta, cfg.seed, step)
    } else {
        repulsion_exact(graph, positions, cfg.scaling, cfg.seed, step)
    };
    let kg = T::lit(cfg.gravity);
    if kg > T::zero() {
        for (i, p) in positions.iter().enumerate() {
            let d = (p[0] * p[0] + p[1] * p[1]).sqrt();
            if d > T::zero() {
                let g = kg * T::lit(graph.mass[i]) / d;
                f[i][0] -= p[0] * g;
                f[i][1] -= p[1] * g;
            }
        }
    }
    for &(a, b, w) in &graph.edges {
        let (a, b) = (a as usize, b as usize);
        let dx = positions[b][0] - positions[a][0];
        let dy = positions[b][1] - positions[a][1];
        let w = T::lit(w);
        let s = if cfg.linlog {
            let d = (dx * dx + dy * dy).sqrt();
            if d > T::zero() {
                w * d.ln_1p() / d
            } else {
                T::zero()
            }
        } else {
            w
        };
        f[a][0] += dx * s;
        f[a][1] += dy * s;
        f[b][0] -= dx * s;
        f[b][1] -= dy * s;
    }
    f
}

/// One synchronous force accumulation and displacement.
pub fn fa2_step<T: Real>(graph: &Fa2Graph, state: &mut Fa2State<T>, cfg: &Fa2Config, step: usize) {
    let f = forces(graph, &state.positions, cfg, step);
    let n = state.positions.len();
    let half = T::lit(0.5);
    let mut swinging = vec![T::zero(); n];
    let mut total_swinging = T::zero();
    let mut total_traction = T::zero();
    for i in 0..n {
        let m = T::lit(graph.mass[i]);
        let (fx, fy) = (f[i][0], f[i][1]);
        let (px, py) = (state.prev_forces[i][0], state.prev_forces[i][1]);
        let sw = m * ((fx - px).powi(2) + (fy - py).powi(2)).sqrt();
        swinging[i] = sw;
        total_swinging += sw;
        total_traction += m * half * ((fx + px).powi(2) + (fy + py).powi(2)).sqrt();
    }

    // global speed
    let nf = T::from_usize_lossy(n.max(1));
    let tol = T::lit(cfg.tolerance);
    let estimated = T::lit(0.05) * nf.sqrt();
    let min_jt = estimated.sqrt();
    let max_jt = T::lit(10.0);
    let mut jt = tol * min_jt.max(max_jt.min(estimated * total_traction / (nf * nf)));
    let min_eff = T::lit(0.05);
    if total_swinging > T::zero() && total_traction > T::zero() {
        if total_swinging / total_traction > T::lit(2.0) {
            if state.speed_efficiency > min_eff {
                state.speed_efficiency *= half;
            }
            jt = jt.max(tol);
        }
        let target = jt * state.speed_efficiency * total_traction / total_swinging;
        if total_swinging > jt * total_traction {
            if state.speed_efficiency > min_eff {
                state.speed_efficiency *= T::lit(0.7);
            }
        } else if state.speed < T::lit(1000.0) {
            state.speed_efficiency *= T::lit(1.3);
        }
        let max_rise = half;
        state.speed = state.speed + (target - state.speed).min(max_rise * state.speed);
    }

    for i in 0..n {
        let factor = state.speed / (T::one() + (state.speed * swinging[i]).sqrt());
        state.positions[i][0] += f[i][0] * factor;
        state.positions[i][1] += f[i][1] * factor;
    }
    state.prev_forces = f;
}

/// 2-D positions for every user of a graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout2D<T> {
    pub users: Vec<UserId>,
    pub positions: Vec<[T; 2]>,
}

impl<T: Real> Layout2D<T> {
    pub fn to_embedding(&self, cfg: &Fa2Config) -> Result<EmbeddingMatrix<T>> {
        let rows = self
            .users
            .iter()
            .zip(&self.positions)
            .map(|(&u, p)| (u, p.to_vec()))
            .collect();
        let meta = EmbeddingMeta::new("fa2", cfg.seed).with("config", crate::config_digest(cfg));
        EmbeddingMatrix::from_rows(2, rows, meta)
    }
}

/// Run `cfg.iterations` steps from seeded uniform positions.
pub fn fa2_layout<T: Real>(graph: &InteractionGraph, cfg: &Fa2Config) -> Result<Layout2D<T>> {
    cfg.validate()?;
    if graph.is_empty() {
        return Err(Error::config("cannot lay out an empty graph"));
    }
    if cfg.prevent_overlap {
        log::warn!("prevent_overlap has no effect: users carry no size");
    }
    let fg = Fa2Graph::from_interactions(graph, cfg.weighted);
    let state = run_layout::<T>(&fg, cfg);
    if state.positions.iter().any(|p| !(p[0].is_finite() && p[1].is_finite())) {
        return Err(Error::Numeric("layout produced non-finite coordinates".into()));
    }
    Ok(Layout2D {
        users: graph.users().to_vec(),
        positions: state.positions,
    })
}

pub fn run_layout<T: Real>(graph: &Fa2Graph, cfg: &Fa2Config) -> Fa2State<T> {
    let mut state = Fa2State::random(graph.num_nodes(), cfg.seed);
    for step in 0..cfg.iterations {
        fa2_step(graph, &mut state, cfg, step);
    }
    state
}
