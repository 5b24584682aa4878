//! TOML run configuration. Every section is optional; missing keys fall back
//! to library defaults, and command-line flags override both.

use std::path::Path;

use leaning_core::classify::{ClassifierSpec, ForestConfig, LogRegConfig, SvmConfig};
use leaning_core::dimred::TsneConfig;
use leaning_core::layout::Fa2Config;
use leaning_core::relational::RelationalConfig;
use leaning_core::skipgram::SkipGramConfig;
use leaning_core::synth::{Engagement, Mixing, RegionSpec, SynthConfig};
use leaning_core::walk::WalkConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub synth: SynthSection,
    pub walk: WalkSection,
    pub skipgram: SkipGramSection,
    pub re: ReSection,
    pub fa2: Fa2Section,
    pub reduce: ReduceSection,
    pub eval: EvalSection,
    pub pipeline: PipelineSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    /// `uk-like` or absent (then `regions` is required).
    pub preset: Option<String>,
    pub seed: Option<u64>,
    pub regions: Option<Vec<RegionSpec>>,
    pub mixing: Option<Mixing>,
    pub engagement: Option<Engagement>,
    pub retweets_per_user: Option<f64>,
    pub activity_sigma: Option<f64>,
    pub hub_bias: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkSection {
    pub walks_per_node: Option<usize>,
    pub walk_length: Option<usize>,
    pub window: Option<usize>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub binary_edges: Option<bool>,
    pub include_self_loops: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkipGramSection {
    pub dim: Option<usize>,
    pub negatives: Option<usize>,
    pub initial_lr: Option<f64>,
    pub epochs: Option<usize>,
    pub ns_power: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReSection {
    pub dim: Option<usize>,
    pub negatives: Option<usize>,
    pub epochs: Option<usize>,
    pub initial_lr: Option<f64>,
    pub ns_power: Option<f64>,
    pub concat_tables: Option<bool>,
    pub dedup: Option<bool>,
    pub include_self_retweets: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fa2Section {
    pub iterations: Option<usize>,
    pub scaling: Option<f64>,
    pub gravity: Option<f64>,
    pub linlog: Option<bool>,
    pub prevent_overlap: Option<bool>,
    pub barnes_hut_theta: Option<f64>,
    pub barnes_hut_min_nodes: Option<usize>,
    pub tolerance: Option<f64>,
    pub weighted: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceSection {
    pub method: Option<String>,
    pub out_dim: Option<usize>,
    pub perplexity: Option<f64>,
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub early_exaggeration: Option<f64>,
    pub exaggeration_iters: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub classifier: Option<String>,
    pub scenario: Option<String>,
    pub reps: Option<usize>,
    pub l2: Option<f64>,
    pub max_iter: Option<usize>,
    pub svm_c: Option<f64>,
    pub svm_epochs: Option<usize>,
    pub trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub features_per_split: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub methods: Option<Vec<String>>,
    pub reductions: Option<Vec<String>>,
    pub scenarios: Option<Vec<String>>,
    pub classifiers: Option<Vec<String>>,
    pub plot: Option<bool>,
    pub regions: Option<Vec<String>>,
}

macro_rules! set {
    ($dst:expr, $src:expr) => {
        if let Some(v) = $src.clone() {
            $dst = v;
        }
    };
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn synth(&self) -> Result<SynthConfig, CliError> {
        let s = &self.synth;
        let seed = s.seed.or(self.seed).unwrap_or(0);
        let mut cfg = match s.preset.as_deref() {
            Some("uk-like") | Some("uk_like") => SynthConfig::uk_like(seed),
            Some(other) => return Err(CliError::usage(format!("unknown synth preset {other:?} (expected uk-like)"))),
            None => match &s.regions {
                Some(_) => SynthConfig {
                    regions: Vec::new(),
                    mixing: Mixing::uniform(0.1),
                    retweets_per_user: 20.0,
                    activity_sigma: 1.0,
                    engagement: Engagement::default(),
                    hub_bias: 1.0,
                    seed,
                },
                None => return Err(CliError::usage("[synth] needs either preset or regions")),
            },
        };
        set!(cfg.regions, s.regions);
        set!(cfg.mixing, s.mixing);
        set!(cfg.engagement, s.engagement);
        set!(cfg.retweets_per_user, s.retweets_per_user);
        set!(cfg.activity_sigma, s.activity_sigma);
        set!(cfg.hub_bias, s.hub_bias);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn walk(&self, base: WalkConfig) -> WalkConfig {
        let w = &self.walk;
        let mut cfg = base;
        set!(cfg.walks_per_node, w.walks_per_node);
        set!(cfg.walk_length, w.walk_length);
        set!(cfg.window, w.window);
        set!(cfg.p, w.p);
        set!(cfg.q, w.q);
        set!(cfg.binary_edges, w.binary_edges);
        set!(cfg.include_self_loops, w.include_self_loops);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg
    }

    pub fn skipgram(&self) -> SkipGramConfig {
        let s = &self.skipgram;
        let mut cfg = SkipGramConfig::default();
        set!(cfg.dim, s.dim);
        set!(cfg.negatives, s.negatives);
        set!(cfg.initial_lr, s.initial_lr);
        set!(cfg.epochs, s.epochs);
        set!(cfg.ns_power, s.ns_power);
        set!(cfg.window, self.walk.window);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg
    }

    pub fn relational(&self) -> RelationalConfig {
        let r = &self.re;
        let mut cfg = RelationalConfig::default();
        set!(cfg.dim, r.dim);
        set!(cfg.negatives, r.negatives);
        set!(cfg.epochs, r.epochs);
        set!(cfg.initial_lr, r.initial_lr);
        set!(cfg.ns_power, r.ns_power);
        set!(cfg.concat_tables, r.concat_tables);
        set!(cfg.dedup, r.dedup);
        set!(cfg.include_self_retweets, r.include_self_retweets);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg
    }

    pub fn fa2(&self) -> Fa2Config {
        let f = &self.fa2;
        let mut cfg = Fa2Config::default();
        set!(cfg.iterations, f.iterations);
        set!(cfg.scaling, f.scaling);
        set!(cfg.gravity, f.gravity);
        set!(cfg.linlog, f.linlog);
        set!(cfg.prevent_overlap, f.prevent_overlap);
        set!(cfg.barnes_hut_theta, f.barnes_hut_theta);
        set!(cfg.barnes_hut_min_nodes, f.barnes_hut_min_nodes);
        set!(cfg.tolerance, f.tolerance);
        set!(cfg.weighted, f.weighted);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg
    }

    pub fn tsne(&self) -> TsneConfig {
        let r = &self.reduce;
        let mut cfg = TsneConfig::default();
        set!(cfg.perplexity, r.perplexity);
        set!(cfg.iterations, r.iterations);
        set!(cfg.learning_rate, r.learning_rate);
        set!(cfg.early_exaggeration, r.early_exaggeration);
        set!(cfg.exaggeration_iters, r.exaggeration_iters);
        set!(cfg.out_dim, r.out_dim);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg
    }

    pub fn classifier(&self, kind: &str) -> Result<ClassifierSpec, CliError> {
        let e = &self.eval;
        let kind = kind.parse()?;
        let mut spec = ClassifierSpec::of(kind);
        let mut lr = LogRegConfig::default();
        set!(lr.l2, e.l2);
        set!(lr.max_iter, e.max_iter);
        let mut svm = SvmConfig::default();
        set!(svm.c, e.svm_c);
        set!(svm.epochs, e.svm_epochs);
        let mut rf = ForestConfig::default();
        set!(rf.trees, e.trees);
        if e.max_depth.is_some() {
            rf.max_depth = e.max_depth;
        }
        if e.features_per_split.is_some() {
            rf.features_per_split = e.features_per_split;
        }
        spec.logreg = lr;
        spec.svm = svm;
        spec.forest = rf;
        Ok(spec.with_seed(self.seed.unwrap_or(0)))
    }
}
