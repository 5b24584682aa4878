//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use leaning_core::classify::{softmax_loss_gradient, ClassifierKind, ClassifierSpec};
use leaning_core::dimred::{
    calibrate_affinities, joint_probabilities, kl_divergence, kl_gradient, pca_fit_transform, tsne, TsneConfig,
};
use leaning_core::embedding::{EmbeddingMatrix, EmbeddingMeta};
use leaning_core::eval::{run_crosstier, run_kshot, run_loo, silhouette};
use leaning_core::graph::Label;
use leaning_core::layout::{fa2_layout, Fa2Config};
use leaning_core::relational::{train_relational, RelationalConfig};
use leaning_core::sgns::{pair_loss, pair_loss_gradient, sgd_pair_step, SharedTable, StepScratch};
use leaning_core::skipgram::{train_skipgram, SkipGramConfig};
use leaning_core::synth::{generate_with_truth, SynthConfig};
use leaning_core::walk::{generate_walks, transition_weights, WalkConfig, WalkGraph};
use leaning_core::{InteractionGraph, LabelSet, Tier, UserId};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_leaning");

struct Suite {
    failed: usize,
}

impl Suite {
    fn check(&mut self, id: &str, pass: bool, detail: impl AsRef<str>) {
        println!("{} {id}: {}", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
        if !pass {
            self.failed += 1;
        }
    }
}

fn main() {
    let mut suite = Suite { failed: 0 };
    majority_baseline(&mut suite);
    synthetic_replication(&mut suite);
    numeric_oracles(&mut suite);
    fa2_separation(&mut suite);
    determinism(&mut suite);
    if suite.failed > 0 {
        println!("{} criteria failed", suite.failed);
        std::process::exit(1);
    }
    println!("all criteria passed");
}

// 1. Majority classifier on reference member class counts.

fn majority_baseline(suite: &mut Suite) {
    let start = Instant::now();
    let regions: [(&str, &[(&str, usize)], f64); 3] = [
        ("SCT", &[("SNP", 184), ("SCU", 59), ("SL", 52), ("SGP", 42), ("SLD", 24)], 13.5),
        ("WAL", &[("WL", 55), ("WC", 42), ("PC", 42), ("WLD", 27)], 12.4),
        ("NIR", &[("SF", 80), ("DUP", 65), ("APNI", 52), ("UUP", 58), ("SDLP", 59)], 8.1),
    ];
    let mut labels = LabelSet::new(BTreeMap::new());
    let mut rows = Vec::new();
    let mut id = 0;
    for (region, parties, _) in &regions {
        for (party, n) in parties.iter() {
            for _ in 0..*n {
                id += 1;
                let label = Label {
                    region: region.to_string(),
                    party: party.to_string(),
                    tier: Tier::Member,
                };
                labels.insert(UserId(id), label, true).unwrap();
                rows.push((UserId(id), vec![0.0]));
            }
        }
    }
    let emb = EmbeddingMatrix::from_rows(1, rows, EmbeddingMeta::new("const", 0)).unwrap();
    let spec = ClassifierSpec::of(ClassifierKind::Majority);
    let mut ok = true;
    let mut detail = Vec::new();
    for (region, _, expected) in &regions {
        let f1 = 100.0 * run_loo(&emb, &labels, region, &spec).unwrap().macro_f1;
        ok &= (f1 - expected).abs() <= 0.1;
        detail.push(format!("{region} {f1:.2} (expected {expected})"));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 1.0;
    suite.check("1 majority baseline", ok, format!("{} in {secs:.3}s", detail.join(", ")));
}

// 2 and part of 4. The uk-like preset, seed 42.

fn synthetic_replication(suite: &mut Suite) {
    let start = Instant::now();
    let out = generate_with_truth(&SynthConfig::uk_like(42)).unwrap();
    let synth_secs = start.elapsed().as_secs_f64();

    let mut sigma_ok = true;
    let mut sigma_detail = Vec::new();
    for (tier, mu) in [(Tier::Member, 0.05), (Tier::Supporter, 0.15), (Tier::Sympathizer, 0.35)] {
        let (cross, total) = out.crossing_counts(Some(tier));
        let frac = cross as f64 / total as f64;
        let sd = (mu * (1.0 - mu) / total as f64).sqrt();
        sigma_ok &= (frac - mu).abs() <= 3.0 * sd;
        sigma_detail.push(format!("{tier} {frac:.4} vs {mu} ({:.1} sd)", (frac - mu) / sd));
    }
    suite.check("4c generator mixing within 3 sd", sigma_ok, sigma_detail.join(", "));

    let logreg = ClassifierSpec::of(ClassifierKind::LogReg);
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let (mut ok_a, mut ok_b, mut ok_c, mut ok_sil) = (true, true, true, true);
    let (mut det_a, mut det_b, mut det_c, mut det_sil) = (vec![], vec![], vec![], vec![]);
    let mut re_secs = 0.0;
    for region in ["SCT", "WAL", "NIR"] {
        let graph = out.region_graph(region).unwrap();
        let labels = out.labels.region_subset(region);

        let t = Instant::now();
        let re_cfg = RelationalConfig { epochs: 20, initial_lr: 0.05, workers, seed: 42, ..RelationalConfig::default() };
        let re = train_relational::<f64>(&graph, &re_cfg).unwrap();
        re_secs += t.elapsed().as_secs_f64();
        let walks = |cfg: WalkConfig, method: &str| {
            let corpus = generate_walks(&graph, &WalkConfig { seed: 42, ..cfg }).unwrap();
            let sg = SkipGramConfig { workers, seed: 42, ..SkipGramConfig::default() };
            train_skipgram::<f64>(&corpus, &sg, method).unwrap()
        };
        let dw = walks(WalkConfig::deepwalk(), "deepwalk");
        let n2v = walks(WalkConfig::node2vec(), "node2vec");
        let fa2_cfg = Fa2Config { barnes_hut_min_nodes: 1000, seed: 42, ..Fa2Config::default() };
        let fa2 = fa2_layout::<f64>(&graph, &fa2_cfg).unwrap().to_embedding(&fa2_cfg).unwrap();

        let loo = |e: &EmbeddingMatrix<f64>| run_loo(e, &labels, region, &logreg).unwrap().macro_f1;
        let (f_re, f_dw, f_n2v, f_fa2) = (loo(&re), loo(&dw), loo(&n2v), loo(&fa2));
        ok_a &= f_re >= 0.95 && f_re >= f_dw && f_re >= f_n2v && f_re >= f_fa2;
        det_a.push(format!("{region} re {f_re:.3} dw {f_dw:.3} n2v {f_n2v:.3} fa2 {f_fa2:.3}"));

        let members: Vec<UserId> = labels.select(Some(region), Some(Tier::Member)).into_iter().map(|m| m.0).collect();
        let re_members = re.subset(&members);
        let y = tsne(re_members.as_slice(), re_members.len(), re_members.dim(), &TsneConfig { seed: 42, ..TsneConfig::default() })
            .unwrap()
            .embedding;
        let rows = re_members.ids().iter().enumerate().map(|(i, &u)| (u, y[2 * i..2 * i + 2].to_vec())).collect();
        let reduced = EmbeddingMatrix::from_rows(2, rows, EmbeddingMeta::new("tsne", 42)).unwrap();
        for k in [1, 3] {
            let f = run_kshot(&reduced, &labels, region, k, 20, &logreg, 42).unwrap().macro_f1;
            ok_b &= (f - f_re).abs() <= 0.05;
            det_b.push(format!("{region} {k}-shot {f:.3} vs loo {f_re:.3}"));
        }

        let sup = run_crosstier(&re, &labels, region, Tier::Supporter, &logreg).unwrap().macro_f1;
        let sym = run_crosstier(&re, &labels, region, Tier::Sympathizer, &logreg).unwrap().macro_f1;
        ok_c &= f_re > sup && sup > sym;
        det_c.push(format!("{region} {f_re:.3} > {sup:.3} > {sym:.3}"));

        let points = |e: &EmbeddingMatrix<f64>| {
            let sub = e.subset(&members);
            let y: Vec<usize> = sub.ids().iter().map(|u| labels.class_index(region, &labels.get(*u).unwrap().party).unwrap()).collect();
            silhouette(sub.as_slice(), sub.dim(), &y).unwrap()
        };
        let (s_re, s_dw) = (points(&re), points(&dw));
        ok_sil &= s_re >= s_dw;
        det_sil.push(format!("{region} re {s_re:.3} dw {s_dw:.3}"));
    }
    let total = start.elapsed().as_secs_f64();
    suite.check("2a strong supervision", ok_a, det_a.join("; "));
    suite.check("2b weak supervision", ok_b, det_b.join("; "));
    suite.check("2c tier monotonicity", ok_c, det_c.join("; "));
    suite.check(
        "2 runtime",
        total <= 900.0 && synth_secs < 60.0 && re_secs < 600.0,
        format!("total {total:.0}s (synth {synth_secs:.1}s, RE {re_secs:.1}s), limit 900s"),
    );
    suite.check("4b relational silhouette >= deepwalk", ok_sil, det_sil.join("; "));
}

// 3. Numeric oracles.

const H: f64 = 1e-5;

fn finite_diff(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + H;
            let up = f(&p);
            p[i] = orig - H;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    diff / b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1e-12)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

fn pair_objective(x: &[f64], d: usize) -> f64 {
    let negs: Vec<&[f64]> = x[2 * d..].chunks(d).collect();
    pair_loss(&x[..d], &x[d..2 * d], &negs).unwrap()
}

fn numeric_oracles(suite: &mut Suite) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut sg, mut re, mut sm, mut ts) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for trial in 0..20 {
        let d = 3 + trial % 6;
        let k = 1 + trial % 5;
        let x = random_vec(&mut rng, d * (2 + k), 1.0);
        let fd = finite_diff(&x, |p| pair_objective(p, d));
        let negs: Vec<&[f64]> = x[2 * d..].chunks(d).collect();
        let g = pair_loss_gradient(&x[..d], &x[d..2 * d], &negs).unwrap();
        let flat: Vec<f64> = g.du.iter().chain(&g.dv).chain(g.dnegs.iter().flatten()).copied().collect();
        sg = sg.max(rel_err(&flat, &fd));

        let lr = 0.01;
        let input = SharedTable::from_fn(1, d, |_, c| x[c]);
        let output = SharedTable::from_fn(1 + k, d, |r, c| x[(1 + r) * d + c]);
        let negatives: Vec<usize> = (1..=k).collect();
        sgd_pair_step(&input, &output, 0, 0, &negatives, lr, &mut StepScratch::new(d));
        let mut after = input.row_vec(0);
        for r in 0..=k {
            after.extend(output.row_vec(r));
        }
        let step: Vec<f64> = after.iter().zip(&x).map(|(a, b)| (a - b) / -lr).collect();
        re = re.max(rel_err(&step, &fd));

        let (n, dd, kk) = (12, 2 + trial % 3, 2 + trial % 4);
        let xs = random_vec(&mut rng, n * dd, 2.0);
        let ys: Vec<usize> = (0..n).map(|i| i % kk).collect();
        let params = random_vec(&mut rng, kk * dd + kk, 0.5);
        let (_, g) = softmax_loss_gradient(&params, &xs, &ys, dd, kk, 0.5);
        sm = sm.max(rel_err(&g, &finite_diff(&params, |p| softmax_loss_gradient(p, &xs, &ys, dd, kk, 0.5).0)));

        let pts = random_vec(&mut rng, 6 * 4, 1.0);
        let p = joint_probabilities(&calibrate_affinities(&pts, 6, 4, 3.0).unwrap().conditional, 6);
        let y = random_vec(&mut rng, 12, 1.0);
        ts = ts.max(rel_err(&kl_gradient(&p, &y, 6, 2, 1.0), &finite_diff(&y, |yy| kl_divergence(&p, yy, 6, 2))));
    }
    suite.check(
        "3i gradients vs finite differences",
        sg < 1e-4 && re < 1e-4 && sm < 1e-4 && ts < 1e-4,
        format!("max relative error: skip-gram {sg:.1e}, relational step {re:.1e}, softmax {sm:.1e}, t-SNE {ts:.1e}"),
    );

    let (n, d) = (50, 10);
    let x: Vec<f64> = random_vec(&mut rng, n * d, 1.0).iter().enumerate().map(|(i, v)| v * (1 + i % d) as f64).collect();
    let (pca, proj) = pca_fit_transform(&x, n, d, d).unwrap();
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x[i * d + j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, d, |i, j| x[i * d + j] - mean[j]);
    let svd = centered.clone().svd(true, true);
    let vt = svd.v_t.unwrap();
    let scores = &centered * vt.transpose();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut pca_diff: f64 = 0.0;
    for (c, &j) in order.iter().enumerate() {
        let dotp: f64 = (0..d).map(|t| pca.components[c * d + t] * vt[(j, t)]).sum();
        let sign = dotp.signum();
        for t in 0..d {
            pca_diff = pca_diff.max((pca.components[c * d + t] - sign * vt[(j, t)]).abs());
        }
        for i in 0..n {
            pca_diff = pca_diff.max((proj[i * d + c] - sign * scores[(i, j)]).abs());
        }
    }
    suite.check("3ii PCA vs SVD", pca_diff < 1e-8, format!("max abs diff {pca_diff:.1e}"));

    let graph = |edges: &[(u64, u64, u64)]| {
        InteractionGraph::from_records(edges.iter().map(|&(s, t, c)| (UserId(s), UserId(t), c))).unwrap()
    };
    let tri = WalkGraph::build(&graph(&[(1, 2, 1), (2, 3, 1), (3, 1, 1)]), false, false);
    let path = WalkGraph::build(&graph(&[(1, 2, 2), (2, 3, 3), (3, 2, 1), (3, 4, 5)]), false, false);
    let cases: Vec<(Vec<(u32, f64)>, Vec<(u32, f64)>)> = vec![
        (transition_weights(&tri, Some(0), 1, 2.0, 0.25), vec![(0, 0.5), (2, 1.0)]),
        (transition_weights(&tri, None, 1, 2.0, 0.25), vec![(0, 1.0), (2, 1.0)]),
        (transition_weights(&path, Some(0), 1, 4.0, 0.5), vec![(0, 0.5), (2, 8.0)]),
        (transition_weights(&path, Some(1), 2, 4.0, 0.5), vec![(1, 1.0), (3, 10.0)]),
        (transition_weights(&path, Some(2), 3, 4.0, 0.5), vec![(2, 1.25)]),
    ];
    let exact = cases.iter().filter(|(a, b)| a == b).count();
    suite.check("3iii node2vec transitions", exact == cases.len(), format!("{exact}/{} exact", cases.len()));

    let pts = random_vec(&mut rng, 80 * 5, 3.0);
    let mut worst: f64 = 0.0;
    for perp in [2.0, 5.0, 15.0, 30.0] {
        let cal = calibrate_affinities(&pts, 80, 5, perp).unwrap();
        for h in cal.entropies {
            worst = worst.max((h - f64::log2(perp)).abs());
        }
    }
    suite.check("3iv perplexity calibration", worst < 1e-4, format!("max entropy error {worst:.1e} bits"));
    let secs = start.elapsed().as_secs_f64();
    suite.check("3 runtime", secs < 10.0, format!("{secs:.2}s"));
}

// 4a. FA2 on two planted communities.

fn fa2_separation(suite: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let size = 25u64;
    let mut recs = Vec::new();
    for base in [0, size] {
        for i in 0..size {
            for j in 0..size {
                if i != j && rng.gen_bool(0.3) {
                    recs.push((UserId(base + i + 1), UserId(base + j + 1), 1));
                }
            }
        }
    }
    for _ in 0..4 {
        recs.push((UserId(rng.gen_range(1..=size)), UserId(size + rng.gen_range(1..=size)), 1));
    }
    let graph = InteractionGraph::from_records(recs).unwrap();
    let layout = fa2_layout::<f64>(&graph, &Fa2Config { seed: 5, ..Fa2Config::default() }).unwrap();
    let (mut intra, mut ni, mut inter, mut nx) = (0.0, 0, 0.0, 0);
    for a in 0..layout.users.len() {
        for b in (a + 1)..layout.users.len() {
            let (p, q) = (layout.positions[a], layout.positions[b]);
            let dist = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            if (layout.users[a].0 > size) == (layout.users[b].0 > size) {
                intra += dist;
                ni += 1;
            } else {
                inter += dist;
                nx += 1;
            }
        }
    }
    let (intra, inter) = (intra / ni as f64, inter / nx as f64);
    suite.check(
        "4a FA2 community separation",
        inter > 2.0 * intra,
        format!("inter {inter:.2} vs intra {intra:.2} ({:.1}x)", inter / intra),
    );
}

// 5. Every CLI stage twice with --deterministic.

fn cli(dir: &Path, args: &[&str]) -> bool {
    Command::new(BIN)
        .arg("--deterministic")
        .args(args)
        .current_dir(dir)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn run_stages(dir: &Path, config: &str) -> bool {
    let stages: Vec<Vec<&str>> = vec![
        vec!["synth", "--config", config, "--out", "data"],
        vec!["ingest", "--edges", "data/R1/edges.tsv", "--labels", "data/R1/labels.tsv", "--catalog", "data/R1/catalog.tsv", "--out", "ingested"],
        vec!["embed", "--edges", "ingested/edges.tsv", "--method", "re", "--config", config, "--out", "re.tsv"],
        vec!["embed", "--edges", "ingested/edges.tsv", "--method", "deepwalk", "--config", config, "--out", "dw.tsv"],
        vec!["embed", "--edges", "ingested/edges.tsv", "--method", "node2vec", "--config", config, "--out", "n2v.tsv"],
        vec!["embed", "--edges", "ingested/edges.tsv", "--method", "fa2", "--config", config, "--out", "fa2.tsv"],
        vec!["reduce", "--input", "re.tsv", "--method", "pca", "--out", "re.pca.tsv"],
        vec!["reduce", "--input", "re.tsv", "--method", "tsne", "--config", config, "--labels", "ingested/labels.tsv", "--out", "re.tsne.tsv"],
        vec!["eval", "--embedding", "re.tsv", "--labels", "ingested/labels.tsv", "--scenario", "loo", "--out", "eval"],
        vec!["eval", "--embedding", "re.tsne.tsv", "--labels", "ingested/labels.tsv", "--scenario", "kshot:3x5", "--out", "eval"],
        vec!["eval", "--embedding", "re.tsv", "--labels", "ingested/labels.tsv", "--scenario", "tier:sympathizer", "--classifier", "rf", "--out", "eval"],
        vec!["plot", "--embedding", "re.tsne.tsv", "--labels", "ingested/labels.tsv", "--catalog", "ingested/catalog.tsv", "--out", "re.svg"],
        vec!["pipeline", "--config", config, "--out", "pipe"],
    ];
    stages.iter().all(|s| cli(dir, s))
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn is_manifest(p: &Path) -> bool {
    let name = p.file_name().unwrap().to_string_lossy();
    name == "manifest.json" || name.ends_with(".manifest.json")
}

fn determinism(suite: &mut Suite) {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/small.toml");
    let config = config.canonicalize().unwrap();
    let config = config.to_str().unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ran = run_stages(a.path(), config) && run_stages(b.path(), config);
    let (fa, fb) = (files(a.path()), files(b.path()));
    let outputs: Vec<&PathBuf> = fa.iter().filter(|p| !is_manifest(p)).collect();
    let identical = outputs
        .iter()
        .filter(|p| fs::read(a.path().join(p)).ok() == fs::read(b.path().join(p)).ok())
        .count();
    let manifests: Vec<&PathBuf> = fa.iter().filter(|p| is_manifest(p)).collect();
    let verified = manifests
        .iter()
        .filter(|m| Command::new(BIN).arg("verify").arg(m).current_dir(a.path()).output().is_ok_and(|o| o.status.success()))
        .count();
    suite.check(
        "5 determinism",
        ran && fa == fb && identical == outputs.len() && !manifests.is_empty() && verified == manifests.len(),
        format!(
            "{identical}/{} output files identical across runs, {verified}/{} manifests verify",
            outputs.len(),
            manifests.len()
        ),
    );
}
