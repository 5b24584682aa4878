//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::process;
use std::time::Instant;

use leaning_core::dimred::{reduce as reduce_embedding, ReductionConfig, ReductionMethod};
use leaning_core::embedding::EmbeddingMatrix;
use leaning_core::eval::{run_scenario, EvalReport, Scenario};
use leaning_core::graph::{ingest_edges, ingest_labels, ingest_labels_with_catalog, write_catalog, write_edges, write_labels, EdgeFormat};
use leaning_core::layout::fa2_layout;
use leaning_core::relational::train_relational;
use leaning_core::skipgram::train_skipgram;
use leaning_core::synth::{generate_with_truth, SynthOutput};
use leaning_core::walk::{generate_walks, WalkConfig};
use leaning_core::{config_digest, Embedding, InteractionGraph, LabelSet, Tier};

use crate::config::RunConfig;
use crate::manifest::{self, manifest_path_for, write_file, Recorder};
use crate::svg::{self, LegendEntry, ScatterPoint};
use crate::{CliError, Context, EmbedArgs, EvalArgs, IngestArgs, PipelineArgs, PlotArgs, ReduceArgs, StatsArgs, SynthArgs, VerifyArgs};

type Result<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Re,
    DeepWalk,
    Node2Vec,
    Fa2,
}

impl Method {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "re" | "relational" => Ok(Method::Re),
            "deepwalk" => Ok(Method::DeepWalk),
            "node2vec" => Ok(Method::Node2Vec),
            "fa2" | "forceatlas2" => Ok(Method::Fa2),
            other => Err(CliError::usage(format!(
                "unknown embedding method {other:?}; valid methods: re, deepwalk, node2vec, fa2"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Re => "re",
            Method::DeepWalk => "deepwalk",
            Method::Node2Vec => "node2vec",
            Method::Fa2 => "fa2",
        }
    }
}

fn edge_format(s: &str) -> Result<EdgeFormat> {
    Ok(s.parse()?)
}

fn load_graph(path: &Path, format: &str, dedup: bool) -> Result<InteractionGraph> {
    let g = ingest_edges(path, edge_format(format)?)?;
    Ok(if dedup { g.deduplicated() } else { g })
}

fn load_labels(labels: &Path, catalog: Option<&Path>) -> Result<LabelSet> {
    Ok(match catalog {
        Some(c) => ingest_labels_with_catalog(labels, c)?,
        None => ingest_labels(labels)?,
    })
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

fn save_embedding(emb: &Embedding, path: &Path, rec: &mut Recorder) -> Result<()> {
    write_file(path, &to_bytes(|b| emb.write(b)))?;
    rec.output(path)
}

fn write_output(path: &Path, bytes: &[u8], rec: &mut Recorder) -> Result<()> {
    write_file(path, bytes)?;
    rec.output(path)
}

/// Train one representation of `graph` with the effective configuration.
pub fn run_embed(graph: &InteractionGraph, method: Method, cfg: &RunConfig, ctx: &Context) -> Result<Embedding> {
    let emb = match method {
        Method::Re => {
            let mut rc = cfg.relational();
            rc.workers = ctx.workers();
            train_relational::<f64>(graph, &rc)?
        }
        Method::DeepWalk | Method::Node2Vec => {
            let base = if method == Method::DeepWalk { WalkConfig::deepwalk() } else { WalkConfig::node2vec() };
            let wc = cfg.walk(base);
            let corpus = generate_walks(graph, &wc)?;
            let mut sc = cfg.skipgram();
            sc.workers = ctx.workers();
            // Unbiased walks are DeepWalk whichever name was used.
            let name = if wc.p == 1.0 && wc.q == 1.0 { "deepwalk" } else { "node2vec" };
            let mut e = train_skipgram::<f64>(&corpus, &sc, name)?;
            e.meta = e
                .meta
                .with("p", wc.p.to_string())
                .with("q", wc.q.to_string())
                .with("walks", config_digest(&wc));
            e
        }
        Method::Fa2 => {
            let fc = cfg.fa2();
            fa2_layout::<f64>(graph, &fc)?.to_embedding(&fc)?
        }
    };
    if !emb.all_finite() {
        return Err(CliError::numeric(format!("{} produced non-finite values", method.as_str())));
    }
    Ok(emb)
}

fn reduction_config(method: ReductionMethod, cfg: &RunConfig) -> ReductionConfig {
    let tsne = cfg.tsne();
    ReductionConfig {
        method,
        out_dim: tsne.out_dim,
        seed: tsne.seed,
        tsne,
    }
}

pub fn run_reduce(emb: &Embedding, method: ReductionMethod, cfg: &RunConfig, parent_digest: &str) -> Result<Embedding> {
    let rc = reduction_config(method, cfg);
    let mut out = reduce_embedding(emb, &rc)?;
    out.meta = out.meta.with("parent", parent_digest);
    if !out.all_finite() {
        return Err(CliError::numeric(format!("{} produced non-finite values", method.as_str())));
    }
    Ok(out)
}

fn scenario_slug(s: &Scenario) -> String {
    s.to_string().replace(':', "-")
}

fn write_report(dir: &Path, name: &str, report: &EvalReport, rec: &mut Recorder) -> Result<()> {
    let stem = format!("{}.{}.{}", name, scenario_slug(&report.scenario), report.classifier);
    write_output(&dir.join(format!("{stem}.txt")), report.to_text().as_bytes(), rec)?;
    write_output(&dir.join(format!("{stem}.json")), report.to_json()?.as_bytes(), rec)?;
    let title = format!("{} {} {} macro-F1 {:.3}", report.region, report.scenario, report.classifier, report.macro_f1);
    let heat = svg::confusion(&report.class_names, &report.confusion.rows(), &title);
    write_output(&dir.join(format!("{stem}.confusion.svg")), heat.as_bytes(), rec)
}

/// Scatter of the labeled users of `tier` (all tiers when `None`) that have
/// a vector. Returns the SVG and the number of points.
pub fn plot_svg(emb: &Embedding, labels: &LabelSet, region: Option<&str>, tier: Option<Tier>, title: &str) -> Result<(String, usize)> {
    if emb.dim() != 2 {
        return Err(CliError::usage(format!(
            "plot needs a 2-D embedding but this one has dim={}; run `leaning reduce` first",
            emb.dim()
        )));
    }
    let mut groups: Vec<(String, String)> = Vec::new();
    let mut points = Vec::new();
    for (u, l) in labels.iter() {
        if region.is_some_and(|r| r != l.region) || tier.is_some_and(|t| t != l.tier) {
            continue;
        }
        let Some(v) = emb.get(u) else { continue };
        let key = (l.region.clone(), l.party.clone());
        let group = match groups.iter().position(|g| *g == key) {
            Some(i) => i,
            None => {
                groups.push(key);
                groups.len() - 1
            }
        };
        points.push((v[0], v[1], group));
    }
    if points.is_empty() {
        return Err(CliError::data("no labeled users of the requested region and tier have a vector"));
    }
    let mut regions: Vec<&str> = groups.iter().map(|g| g.0.as_str()).collect();
    regions.sort_unstable();
    regions.dedup();
    // Legend follows catalog order; groups are remapped accordingly.
    let mut legend = Vec::new();
    let mut remap = vec![0; groups.len()];
    for r in &regions {
        for p in labels.parties(r).unwrap_or(&[]) {
            if let Some(g) = groups.iter().position(|g| g.0 == *r && g.1 == p.name) {
                remap[g] = legend.len();
                let label = if regions.len() > 1 { format!("{r} {}", p.name) } else { p.name.clone() };
                legend.push(LegendEntry { label, color: p.color.clone() });
            }
        }
    }
    let pts: Vec<ScatterPoint> = points
        .iter()
        .map(|&(x, y, g)| ScatterPoint { x, y, group: remap[g] })
        .collect();
    Ok((svg::scatter(&pts, &legend, title), pts.len()))
}

fn write_synth(dir: &Path, out: &SynthOutput, rec: &mut Recorder) -> Result<()> {
    write_output(&dir.join("edges.tsv"), &to_bytes(|b| write_edges(&out.graph, b)), rec)?;
    write_output(&dir.join("labels.tsv"), &to_bytes(|b| write_labels(&out.labels, b)), rec)?;
    write_output(&dir.join("catalog.tsv"), &to_bytes(|b| write_catalog(&out.labels, b)), rec)?;
    let regions: Vec<String> = out.labels.regions().map(str::to_string).collect();
    for r in regions {
        let g = out.region_graph(&r)?;
        let l = out.labels.region_subset(&r);
        let rd = dir.join(&r);
        write_output(&rd.join("edges.tsv"), &to_bytes(|b| write_edges(&g, b)), rec)?;
        write_output(&rd.join("labels.tsv"), &to_bytes(|b| write_labels(&l, b)), rec)?;
        write_output(&rd.join("catalog.tsv"), &to_bytes(|b| write_catalog(&l, b)), rec)?;
    }
    Ok(())
}

pub fn synth(ctx: &Context, a: SynthArgs) -> Result<()> {
    if a.config.is_none() && a.preset.is_none() {
        return Err(CliError::usage("synth needs --config FILE or --preset uk-like"));
    }
    let mut cfg = RunConfig::load_opt(a.config.as_deref())?;
    if a.preset.is_some() {
        cfg.synth.preset = a.preset.clone();
    }
    if a.seed.is_some() {
        cfg.synth.seed = a.seed;
    }
    let sc = cfg.synth()?;
    let mut rec = Recorder::new("synth", ctx);
    if let Some(c) = &a.config {
        rec.input(c)?;
    }
    rec.config(cfg.to_toml());
    rec.seed("synth", sc.seed);
    let out = rec.time("generate", || generate_with_truth(&sc))?;
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::data(format!("cannot create {}: {e}", a.out.display())))?;
    let t = Instant::now();
    write_synth(&a.out, &out, &mut rec)?;
    rec.elapsed("write", t);
    let s = out.graph.stats();
    println!("{}\t{}\t{}", s.users, s.edges, s.retweets);
    rec.finish(&a.out.join("manifest.json"))?;
    Ok(())
}

pub fn ingest(ctx: &Context, a: IngestArgs) -> Result<()> {
    let mut rec = Recorder::new("ingest", ctx);
    rec.input(&a.edges)?;
    let g = rec.time("edges", || load_graph(&a.edges, &a.format, a.dedup))?;
    write_output(&a.out.join("edges.tsv"), &to_bytes(|b| write_edges(&g, b)), &mut rec)?;
    let map = to_bytes(|b| {
        use std::io::Write;
        for (i, u) in g.users().iter().enumerate() {
            writeln!(b, "{i}\t{u}")?;
        }
        Ok(())
    });
    write_output(&a.out.join("users.tsv"), &map, &mut rec)?;
    if let Some(lp) = &a.labels {
        rec.input(lp)?;
        if let Some(c) = &a.catalog {
            rec.input(c)?;
        }
        let labels = load_labels(lp, a.catalog.as_deref())?;
        let missing = labels.iter().filter(|(u, _)| g.index_of(*u).is_none()).count();
        if missing > 0 {
            log::warn!("{missing} labeled users do not occur in the edge list");
        }
        write_output(&a.out.join("labels.tsv"), &to_bytes(|b| write_labels(&labels, b)), &mut rec)?;
        write_output(&a.out.join("catalog.tsv"), &to_bytes(|b| write_catalog(&labels, b)), &mut rec)?;
    }
    let s = g.stats();
    println!("{}\t{}\t{}", s.users, s.edges, s.retweets);
    rec.finish(&a.out.join("manifest.json"))?;
    Ok(())
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let g = load_graph(&a.edges, &a.format, false)?;
    let s = g.stats();
    println!("{}\t{}\t{}", s.users, s.edges, s.retweets);
    Ok(())
}

fn apply_embed_flags(cfg: &mut RunConfig, method: Method, a: &EmbedArgs) {
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    match method {
        Method::Re => {
            cfg.re.dim = a.dim.or(cfg.re.dim);
            cfg.re.epochs = a.epochs.or(cfg.re.epochs);
            cfg.re.initial_lr = a.lr.or(cfg.re.initial_lr);
            cfg.re.negatives = a.negatives.or(cfg.re.negatives);
        }
        Method::DeepWalk | Method::Node2Vec => {
            cfg.skipgram.dim = a.dim.or(cfg.skipgram.dim);
            cfg.skipgram.epochs = a.epochs.or(cfg.skipgram.epochs);
            cfg.skipgram.initial_lr = a.lr.or(cfg.skipgram.initial_lr);
            cfg.skipgram.negatives = a.negatives.or(cfg.skipgram.negatives);
            cfg.walk.p = a.p.or(cfg.walk.p);
            cfg.walk.q = a.q.or(cfg.walk.q);
            cfg.walk.walks_per_node = a.walks_per_node.or(cfg.walk.walks_per_node);
            cfg.walk.walk_length = a.walk_length.or(cfg.walk.walk_length);
            cfg.walk.window = a.window.or(cfg.walk.window);
        }
        Method::Fa2 => {
            cfg.fa2.iterations = a.iterations.or(cfg.fa2.iterations);
        }
    }
}

pub fn embed(ctx: &Context, a: EmbedArgs) -> Result<()> {
    let method = Method::parse(&a.method)?;
    let mut cfg = RunConfig::load_opt(a.config.as_deref())?;
    apply_embed_flags(&mut cfg, method, &a);
    if method == Method::DeepWalk && (cfg.walk.p.is_some_and(|p| p != 1.0) || cfg.walk.q.is_some_and(|q| q != 1.0)) {
        log::warn!("deepwalk with p or q other than 1 is node2vec; the output is labeled accordingly");
    }
    let mut rec = Recorder::new("embed", ctx);
    rec.input(&a.edges)?;
    if let Some(c) = &a.config {
        rec.input(c)?;
    }
    rec.config(cfg.to_toml());
    rec.seed(method.as_str(), cfg.seed.unwrap_or(0));
    let g = rec.time("ingest", || load_graph(&a.edges, &a.format, a.dedup))?;
    let emb = rec.time(method.as_str(), || run_embed(&g, method, &cfg, ctx))?;
    save_embedding(&emb, &a.out, &mut rec)?;
    eprintln!("{}: {} users, dim {}", method.as_str(), emb.len(), emb.dim());
    rec.finish(&manifest_path_for(&a.out))?;
    Ok(())
}

pub fn reduce(ctx: &Context, a: ReduceArgs) -> Result<()> {
    let mut cfg = RunConfig::load_opt(a.config.as_deref())?;
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    cfg.reduce.method = a.method.clone().or(cfg.reduce.method);
    cfg.reduce.out_dim = a.dim.or(cfg.reduce.out_dim);
    cfg.reduce.perplexity = a.perplexity.or(cfg.reduce.perplexity);
    cfg.reduce.iterations = a.iterations.or(cfg.reduce.iterations);
    let method: ReductionMethod = cfg.reduce.method.as_deref().unwrap_or("tsne").parse()?;
    let mut rec = Recorder::new("reduce", ctx);
    rec.input(&a.input)?;
    if let Some(c) = &a.config {
        rec.input(c)?;
    }
    rec.config(cfg.to_toml());
    rec.seed(method.as_str(), cfg.seed.unwrap_or(0));
    let parent = manifest::file_sha256(&a.input)?;
    let mut emb = EmbeddingMatrix::<f64>::load(&a.input)?;
    if let Some(lp) = &a.labels {
        rec.input(lp)?;
        let labels = load_labels(lp, None)?;
        let tiers = a
            .tiers
            .split(',')
            .map(|t| Ok(t.trim().parse::<Tier>()?))
            .collect::<Result<Vec<_>>>()?;
        let users: Vec<_> = labels
            .iter()
            .filter(|(_, l)| tiers.contains(&l.tier) && a.region.as_ref().map_or(true, |r| *r == l.region))
            .map(|(u, _)| u)
            .collect();
        emb = emb.subset(&users);
        if emb.is_empty() {
            return Err(CliError::data("no selected labeled user has a vector"));
        }
    }
    let out = rec.time(method.as_str(), || run_reduce(&emb, method, &cfg, &parent))?;
    save_embedding(&out, &a.out, &mut rec)?;
    rec.finish(&manifest_path_for(&a.out))?;
    Ok(())
}

fn parse_scenario(s: &str, reps: Option<usize>) -> Result<Scenario> {
    let mut sc: Scenario = s.parse()?;
    if let (Scenario::KShot { reps: r, .. }, Some(n)) = (&mut sc, reps) {
        if !s.contains('x') {
            *r = n;
        }
    }
    Ok(sc)
}

/// Regions with at least two members that have a vector.
fn evaluable_regions(emb: &Embedding, labels: &LabelSet) -> Vec<String> {
    labels
        .regions()
        .filter(|r| {
            labels
                .select(Some(r), Some(Tier::Member))
                .iter()
                .filter(|(u, _)| emb.get(*u).is_some())
                .count()
                >= 2
        })
        .map(str::to_string)
        .collect()
}

pub fn eval(ctx: &Context, a: EvalArgs) -> Result<()> {
    let mut cfg = RunConfig::load_opt(a.config.as_deref())?;
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    cfg.eval.scenario = a.scenario.clone().or(cfg.eval.scenario);
    cfg.eval.classifier = a.classifier.clone().or(cfg.eval.classifier);
    cfg.eval.reps = a.reps.or(cfg.eval.reps);
    let scenario = parse_scenario(cfg.eval.scenario.as_deref().unwrap_or("loo"), cfg.eval.reps)?;
    let spec = cfg.classifier(cfg.eval.classifier.as_deref().unwrap_or("logreg"))?;
    let seed = cfg.seed.unwrap_or(0);
    let mut rec = Recorder::new("eval", ctx);
    rec.input(&a.embedding)?;
    rec.input(&a.labels)?;
    if let Some(c) = &a.catalog {
        rec.input(c)?;
    }
    if let Some(c) = &a.config {
        rec.input(c)?;
    }
    rec.config(cfg.to_toml());
    rec.seed("eval", seed);
    let emb = EmbeddingMatrix::<f64>::load(&a.embedding)?;
    let labels = load_labels(&a.labels, a.catalog.as_deref())?;
    let regions = match &a.region {
        Some(r) => {
            if labels.parties(r).is_none() {
                return Err(CliError::data(format!("region {r:?} does not occur in the labels")));
            }
            vec![r.clone()]
        }
        None => evaluable_regions(&emb, &labels),
    };
    if regions.is_empty() {
        return Err(CliError::data("no region has two or more labeled members with vectors"));
    }
    for r in &regions {
        let report = rec.time(&format!("{r}/{scenario}"), || run_scenario(&emb, &labels, r, scenario, &spec, seed))?;
        write_report(&a.out, r, &report, &mut rec)?;
        match report.macro_f1_sd {
            Some(sd) => println!("{r}\t{scenario}\t{}\t{:.4}\t{:.4}", report.classifier, report.macro_f1, sd),
            None => println!("{r}\t{scenario}\t{}\t{:.4}", report.classifier, report.macro_f1),
        }
    }
    let name = format!("eval.{}.{}.manifest.json", scenario_slug(&scenario), spec.kind);
    rec.finish(&a.out.join(name))?;
    Ok(())
}

fn parse_tier(s: &str) -> Result<Option<Tier>> {
    if s == "all" {
        Ok(None)
    } else {
        Ok(Some(s.parse()?))
    }
}

pub fn plot(ctx: &Context, a: PlotArgs) -> Result<()> {
    let tier = parse_tier(&a.tier)?;
    let mut rec = Recorder::new("plot", ctx);
    rec.input(&a.embedding)?;
    rec.input(&a.labels)?;
    if let Some(c) = &a.catalog {
        rec.input(c)?;
    }
    let emb = EmbeddingMatrix::<f64>::load(&a.embedding)?;
    let labels = load_labels(&a.labels, a.catalog.as_deref())?;
    let title = format!("{} {}", a.region.as_deref().unwrap_or("all regions"), emb.meta.method);
    let (svg, n) = plot_svg(&emb, &labels, a.region.as_deref(), tier, &title)?;
    write_output(&a.out, svg.as_bytes(), &mut rec)?;
    eprintln!("plotted {n} users");
    rec.finish(&manifest_path_for(&a.out))?;
    Ok(())
}

const DEFAULT_METHODS: [&str; 4] = ["re", "deepwalk", "node2vec", "fa2"];
const DEFAULT_SCENARIOS: [&str; 5] = ["loo", "kshot:1", "kshot:3", "tier:supporter", "tier:sympathizer"];

fn strings(v: &Option<Vec<String>>, default: &[&str]) -> Vec<String> {
    v.clone().unwrap_or_else(|| default.iter().map(|s| s.to_string()).collect())
}

pub fn pipeline(ctx: &Context, a: PipelineArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    let p = cfg.pipeline.clone();
    let methods = strings(&p.methods, &DEFAULT_METHODS)
        .iter()
        .map(|m| Method::parse(m))
        .collect::<Result<Vec<_>>>()?;
    let reductions = strings(&p.reductions, &["tsne"])
        .iter()
        .map(|m| Ok(m.parse::<ReductionMethod>()?))
        .collect::<Result<Vec<_>>>()?;
    let scenarios = strings(&p.scenarios, &DEFAULT_SCENARIOS)
        .iter()
        .map(|s| parse_scenario(s, cfg.eval.reps))
        .collect::<Result<Vec<_>>>()?;
    let classifiers = strings(&p.classifiers, &["logreg"])
        .iter()
        .map(|c| cfg.classifier(c))
        .collect::<Result<Vec<_>>>()?;
    let sc = cfg.synth()?;
    let seed = cfg.seed.unwrap_or(0);

    let mut rec = Recorder::new("pipeline", ctx);
    rec.input(&a.config)?;
    rec.config(cfg.to_toml());
    rec.seed("synth", sc.seed);
    rec.seed("pipeline", seed);
    let data = rec.time("synth", || generate_with_truth(&sc))?;
    let t = Instant::now();
    write_synth(&a.out.join("data"), &data, &mut rec)?;
    rec.elapsed("write-data", t);

    let regions = match &p.regions {
        Some(rs) => rs.clone(),
        None => sc.regions.iter().map(|r| r.name.clone()).collect(),
    };
    let mut summary = String::from("region\trepresentation\tscenario\tclassifier\tmacro_f1\tmacro_f1_sd\n");
    for region in &regions {
        if data.labels.parties(region).is_none() {
            return Err(CliError::usage(format!("pipeline region {region:?} is not in the synth config")));
        }
        let g = data.region_graph(region)?;
        let labels = data.labels.region_subset(region);
        let rdir = a.out.join(region);
        for &m in &methods {
            let emb = rec.time(&format!("{region}/{}", m.as_str()), || run_embed(&g, m, &cfg, ctx))?;
            let path = rdir.join(format!("{}.emb.tsv", m.as_str()));
            save_embedding(&emb, &path, &mut rec)?;
            // Raw vectors serve every scenario; reductions are fit per user
            // subset, on exactly the users a scenario trains and tests on.
            let mut variants = vec![(m.as_str().to_string(), emb.clone(), scenarios.clone(), false)];
            if emb.dim() > cfg.tsne().out_dim {
                let parent = manifest::file_sha256(&path)?;
                for &red in &reductions {
                    for (subset, tiers) in reduction_subsets(&scenarios) {
                        let users: Vec<_> = labels
                            .iter()
                            .filter(|(u, l)| tiers.contains(&l.tier) && emb.get(*u).is_some())
                            .map(|(u, _)| u)
                            .collect();
                        let name = format!("{}+{}", m.as_str(), red.as_str());
                        let r = rec.time(&format!("{region}/{name}/{subset}"), || {
                            run_reduce(&emb.subset(&users), red, &cfg, &parent)
                        })?;
                        let file = format!("{}.{}.{subset}.emb.tsv", m.as_str(), red.as_str());
                        save_embedding(&r, &rdir.join(file), &mut rec)?;
                        let scen: Vec<Scenario> = scenarios
                            .iter()
                            .copied()
                            .filter(|s| scenario_subset(s).0 == subset)
                            .collect();
                        variants.push((name, r, scen, subset == "members"));
                    }
                }
            } else {
                variants[0].3 = true;
            }
            for (name, e, scen, plot_it) in &variants {
                for &scenario in scen {
                    for spec in &classifiers {
                        let report = rec.time(&format!("{region}/{name}/{scenario}/{}", spec.kind), || {
                            run_scenario(e, &labels, region, scenario, spec, seed)
                        })?;
                        write_report(&rdir.join("reports"), &name.replace('+', "."), &report, &mut rec)?;
                        let sd = report.macro_f1_sd.map_or(String::new(), |s| format!("{s:.6}"));
                        summary.push_str(&format!(
                            "{region}\t{name}\t{scenario}\t{}\t{:.6}\t{sd}\n",
                            spec.kind, report.macro_f1
                        ));
                    }
                }
                if p.plot.unwrap_or(true) && *plot_it && e.dim() == 2 {
                    let title = format!("{region} {name} members");
                    let (svg, _) = plot_svg(e, &labels, Some(region), Some(Tier::Member), &title)?;
                    write_output(&rdir.join(format!("{}.members.svg", name.replace('+', "."))), svg.as_bytes(), &mut rec)?;
                }
            }
        }
    }
    write_output(&a.out.join("summary.tsv"), summary.as_bytes(), &mut rec)?;
    // A closed stdout (e.g. piped into head) is not an error here.
    let _ = std::io::Write::write_all(&mut std::io::stdout(), summary.as_bytes());
    rec.finish(&a.out.join("manifest.json"))?;
    Ok(())
}

/// Name and tiers of the users a scenario trains and tests on.
fn scenario_subset(s: &Scenario) -> (&'static str, &'static [Tier]) {
    match s {
        Scenario::Loo | Scenario::KShot { .. } => ("members", &[Tier::Member]),
        Scenario::CrossTier { tier: Tier::Supporter } => ("supporters", &[Tier::Member, Tier::Supporter]),
        Scenario::CrossTier { .. } => ("sympathizers", &[Tier::Member, Tier::Sympathizer]),
    }
}

/// Distinct user subsets needed by `scenarios`; members always come first
/// so there is something to plot.
fn reduction_subsets(scenarios: &[Scenario]) -> Vec<(&'static str, &'static [Tier])> {
    let mut out = vec![scenario_subset(&Scenario::Loo)];
    for s in scenarios {
        let sub = scenario_subset(s);
        if !out.iter().any(|o| o.0 == sub.0) {
            out.push(sub);
        }
    }
    out
}

const CONFIGURABLE: [&str; 5] = ["synth", "embed", "reduce", "eval", "pipeline"];

/// Replace (or add) `--config` in a recorded command line.
fn with_config(argv: &[String], config: &Path) -> Vec<String> {
    let mut out = Vec::with_capacity(argv.len() + 2);
    let mut replaced = false;
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            it.next();
            replaced = true;
            out.push(a.clone());
            out.push(config.display().to_string());
        } else if a.starts_with("--config=") {
            replaced = true;
            out.push(format!("--config={}", config.display()));
        } else {
            out.push(a.clone());
        }
    }
    if !replaced {
        out.push("--config".into());
        out.push(config.display().to_string());
    }
    out
}

pub fn verify(_ctx: &Context, a: VerifyArgs) -> Result<()> {
    let m = manifest::load(&a.manifest)?;
    let bad = manifest::verify(&m);
    for b in &bad {
        println!("FAIL {b}");
    }
    if !bad.is_empty() {
        return Err(CliError::data(format!("{} recorded digests do not match", bad.len())));
    }
    println!("OK {} files match", m.inputs.len() + m.outputs.len());
    if a.rerun {
        let mut args: Vec<String> = m.argv.iter().skip(1).cloned().collect();
        if CONFIGURABLE.contains(&m.command.as_str()) {
            let snapshot = PathBuf::from(format!("{}.rerun.toml", a.manifest.display()));
            write_file(&snapshot, m.config.as_bytes())?;
            let snapshot = std::fs::canonicalize(&snapshot).unwrap_or(snapshot);
            args = with_config(&args, &snapshot);
        }
        let exe = std::env::current_exe().map_err(|e| CliError::data(e.to_string()))?;
        let status = process::Command::new(exe)
            .args(&args)
            .current_dir(&m.cwd)
            .stdout(process::Stdio::null())
            .status()
            .map_err(|e| CliError::data(format!("cannot re-run: {e}")))?;
        if !status.success() {
            return Err(CliError::data(format!("re-run exited with {status}")));
        }
        let bad: Vec<String> = manifest::verify(&m)
            .into_iter()
            .filter(|b| !b.ends_with("missing"))
            .collect();
        for b in &bad {
            println!("FAIL rerun {b}");
        }
        if !bad.is_empty() {
            return Err(CliError::data("re-run did not reproduce the recorded outputs"));
        }
        println!("OK rerun reproduced {} outputs", m.outputs.len());
    }
    Ok(())
}
