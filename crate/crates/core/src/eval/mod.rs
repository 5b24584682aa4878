//! Evaluation protocols: leave-one-out over members, k-shot with repeated
//! sampling, and member-trained cross-tier transfer.

mod metrics;

pub use metrics::{macro_f1, silhouette, Confusion};

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::{train, ClassifierSpec, Dataset};
use crate::embedding::EmbeddingMatrix;
use crate::graph::{LabelSet, Tier, UserId};
use crate::{rng, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Scenario {
    Loo,
    KShot { k: usize, reps: usize },
    CrossTier { tier: Tier },
}

pub const DEFAULT_KSHOT_REPS: usize = 20;

impl std::str::FromStr for Scenario {
    type Err = Error;

    /// `loo`, `kshot:K` or `kshot:KxREPS`, `tier:supporter|sympathizer`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::config(format!("unknown scenario {s:?} (expected loo, kshot:K[xREPS], tier:supporter|sympathizer)"));
        if s == "loo" {
            return Ok(Scenario::Loo);
        }
        if let Some(rest) = s.strip_prefix("kshot:") {
            let (k, reps) = match rest.split_once('x') {
                Some((k, r)) => (k, r.parse().map_err(|_| bad())?),
                None => (rest, DEFAULT_KSHOT_REPS),
            };
            let k: usize = k.parse().map_err(|_| bad())?;
            if k == 0 || reps == 0 {
                return Err(Error::config("kshot needs k >= 1 and reps >= 1"));
            }
            return Ok(Scenario::KShot { k, reps });
        }
        if let Some(t) = s.strip_prefix("tier:") {
            let tier: Tier = t.parse()?;
            if tier == Tier::Member {
                return Err(Error::config("members are the training tier; use loo or kshot to test on them"));
            }
            return Ok(Scenario::CrossTier { tier });
        }
        Err(bad())
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scenario::Loo => write!(f, "loo"),
            Scenario::KShot { k, reps } => write!(f, "kshot:{k}x{reps}"),
            Scenario::CrossTier { tier } => write!(f, "tier:{tier}"),
        }
    }
}

/// Scores of one scenario run. For k-shot, `macro_f1` and `per_class_f1` are
/// means over repetitions and the confusion matrix pools all repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scenario: Scenario,
    pub classifier: String,
    pub region: String,
    pub class_names: Vec<String>,
    pub macro_f1: f64,
    pub macro_f1_sd: Option<f64>,
    pub per_class_f1: Vec<f64>,
    pub confusion: Confusion,
    pub rep_scores: Vec<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
    pub config_digest: String,
    /// Labeled users without a feature vector.
    pub excluded: Vec<UserId>,
    pub gold: Vec<usize>,
    pub predicted: Vec<usize>,
    pub notes: Vec<String>,
}

impl EvalReport {
    /// Line-oriented `key = value` rendering.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario = {}", self.scenario);
        let _ = writeln!(s, "classifier = {}", self.classifier);
        let _ = writeln!(s, "region = {}", self.region);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "config = {}", self.config_digest);
        let _ = writeln!(s, "train_size = {}", self.train_size);
        let _ = writeln!(s, "test_size = {}", self.test_size);
        let _ = writeln!(s, "macro_f1 = {:.6}", self.macro_f1);
        if let Some(sd) = self.macro_f1_sd {
            let _ = writeln!(s, "macro_f1_sd = {sd:.6}");
            let _ = writeln!(s, "reps = {}", self.rep_scores.len());
        }
        for (name, f) in self.class_names.iter().zip(&self.per_class_f1) {
            let _ = writeln!(s, "f1.{name} = {f:.6}");
        }
        for (g, row) in self.class_names.iter().zip(self.confusion.rows()) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "confusion.{g} = {}", cells.join(" "));
        }
        if !self.excluded.is_empty() {
            let _ = writeln!(s, "excluded = {}", self.excluded.len());
        }
        for n in &self.notes {
            let _ = writeln!(s, "note = {n}");
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Feature rows for the selected users; users without a vector are returned
/// separately.
fn gather<T: Real>(
    features: &EmbeddingMatrix<T>,
    users: &[(UserId, usize)],
    class_names: &[String],
) -> Result<(Dataset<T>, Vec<UserId>, Vec<UserId>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut kept = Vec::new();
    let mut missing = Vec::new();
    for &(u, c) in users {
        match features.get(u) {
            Some(row) => {
                x.extend_from_slice(row);
                y.push(c);
                kept.push(u);
            }
            None => missing.push(u),
        }
    }
    if !missing.is_empty() {
        log::warn!("{} labeled users have no feature vector and are excluded", missing.len());
    }
    let data = Dataset::new(x, features.dim(), y, class_names.to_vec())?;
    Ok((data, kept, missing))
}

fn region_classes(labels: &LabelSet, region: &str) -> Result<Vec<String>> {
    let names = labels.party_names(region);
    if names.is_empty() {
        return Err(Error::data(format!("region {region:?} has no party catalog")));
    }
    Ok(names)
}

#[allow(clippy::too_many_arguments)]
fn single_run_report(
    scenario: Scenario,
    spec: &ClassifierSpec,
    region: &str,
    class_names: Vec<String>,
    gold: Vec<usize>,
    predicted: Vec<usize>,
    train_size: usize,
    excluded: Vec<UserId>,
    seed: u64,
    notes: Vec<String>,
) -> Result<EvalReport> {
    let confusion = Confusion::from_predictions(&gold, &predicted, class_names.len())?;
    let per_class_f1 = confusion.per_class_f1();
    Ok(EvalReport {
        scenario,
        classifier: spec.kind.to_string(),
        region: region.to_string(),
        class_names,
        macro_f1: confusion.macro_f1(),
        macro_f1_sd: None,
        per_class_f1,
        test_size: gold.len(),
        confusion,
        rep_scores: Vec::new(),
        train_size,
        seed,
        config_digest: crate::config_digest(spec),
        excluded,
        gold,
        predicted,
        notes,
    })
}

/// Leave-one-out over the members of `region`; predictions are pooled into
/// one confusion matrix and scored once.
pub fn run_loo<T: Real>(
    features: &EmbeddingMatrix<T>,
    labels: &LabelSet,
    region: &str,
    spec: &ClassifierSpec,
) -> Result<EvalReport> {
    let class_names = region_classes(labels, region)?;
    let members = labels.select(Some(region), Some(Tier::Member));
    let (data, _, excluded) = gather(features, &members, &class_names)?;
    let n = data.len();
    if n < 2 {
        return Err(Error::data(format!("region {region:?} has fewer than two usable members")));
    }
    let mut notes = Vec::new();
    for (c, &count) in data.class_counts().iter().enumerate() {
        if count == 1 {
            let msg = format!("class {} has a single member; its fold trains without the class", class_names[c]);
            log::info!("{msg}");
            notes.push(msg);
        }
    }
    let predicted: Result<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let train_idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            let model = train(&data.subset(&train_idx), spec)?;
            Ok(model.predict(data.row(i)))
        })
        .collect();
    single_run_report(
        Scenario::Loo,
        spec,
        region,
        class_names,
        data.labels().to_vec(),
        predicted?,
        n - 1,
        excluded,
        0,
        notes,
    )
}

/// `k` members per class for training, the remaining members for testing,
/// repeated `reps` times with independent seeded samples.
pub fn run_kshot<T: Real>(
    features: &EmbeddingMatrix<T>,
    labels: &LabelSet,
    region: &str,
    k: usize,
    reps: usize,
    spec: &ClassifierSpec,
    seed: u64,
) -> Result<EvalReport> {
    if k == 0 || reps == 0 {
        return Err(Error::config("kshot needs k >= 1 and reps >= 1"));
    }
    let class_names = region_classes(labels, region)?;
    let members = labels.select(Some(region), Some(Tier::Member));
    let (data, _, excluded) = gather(features, &members, &class_names)?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); class_names.len()];
    for (i, &c) in data.labels().iter().enumerate() {
        by_class[c].push(i);
    }
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() < k {
            return Err(Error::data(format!(
                "class {} has {} members, fewer than k = {k}",
                class_names[c],
                idx.len()
            )));
        }
    }
    let runs: Result<Vec<(Vec<usize>, Vec<usize>, usize)>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng::stream(seed, &[0x5407, rep as u64]);
            let mut train_idx = Vec::with_capacity(k * by_class.len());
            let mut in_train = vec![false; data.len()];
            for idx in &by_class {
                for &i in idx.choose_multiple(&mut r, k) {
                    train_idx.push(i);
                    in_train[i] = true;
                }
            }
            train_idx.sort_unstable();
            let test_idx: Vec<usize> = (0..data.len()).filter(|&i| !in_train[i]).collect();
            let rep_spec = spec.clone().with_seed(r.gen());
            let model = train(&data.subset(&train_idx), &rep_spec)?;
            let gold: Vec<usize> = test_idx.iter().map(|&i| data.labels()[i]).collect();
            let pred: Vec<usize> = test_idx.iter().map(|&i| model.predict(data.row(i))).collect();
            Ok((gold, pred, train_idx.len()))
        })
        .collect();
    let runs = runs?;
    let kc = class_names.len();
    let mut pooled = Confusion::new(kc);
    let mut rep_scores = Vec::with_capacity(reps);
    let mut per_class = vec![0.0; kc];
    let mut gold_all = Vec::new();
    let mut pred_all = Vec::new();
    for (gold, pred, _) in &runs {
        let c = Confusion::from_predictions(gold, pred, kc)?;
        rep_scores.push(c.macro_f1());
        for (acc, f) in per_class.iter_mut().zip(c.per_class_f1()) {
            *acc += f / reps as f64;
        }
        pooled.merge(&c);
        gold_all.extend_from_slice(gold);
        pred_all.extend_from_slice(pred);
    }
    let mean = rep_scores.iter().sum::<f64>() / reps as f64;
    let sd = if reps > 1 {
        (rep_scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt()
    } else {
        0.0
    };
    let (test_size, train_size) = (runs[0].0.len(), runs[0].2);
    Ok(EvalReport {
        scenario: Scenario::KShot { k, reps },
        classifier: spec.kind.to_string(),
        region: region.to_string(),
        class_names,
        macro_f1: mean,
        macro_f1_sd: Some(sd),
        per_class_f1: per_class,
        confusion: pooled,
        rep_scores,
        train_size,
        test_size,
        seed,
        config_digest: crate::config_digest(spec),
        excluded,
        gold: gold_all,
        predicted: pred_all,
        notes: Vec::new(),
    })
}

/// Train on every member of `region`, test on every user of `test_tier`.
pub fn run_crosstier<T: Real>(
    features: &EmbeddingMatrix<T>,
    labels: &LabelSet,
    region: &str,
    test_tier: Tier,
    spec: &ClassifierSpec,
) -> Result<EvalReport> {
    if test_tier == Tier::Member {
        return Err(Error::config("members are the training tier; use loo or kshot to test on them"));
    }
    let class_names = region_classes(labels, region)?;
    let members = labels.select(Some(region), Some(Tier::Member));
    let (train_data, _, mut excluded) = gather(features, &members, &class_names)?;
    let tier_users = labels.select(Some(region), Some(test_tier));
    let (test_data, _, missing) = gather(features, &tier_users, &class_names)?;
    excluded.extend(missing);
    if test_data.is_empty() {
        return Err(Error::data(format!("no {test_tier} users with features in region {region:?}")));
    }
    let model = train(&train_data, spec)?;
    let predicted = model.predict_all(&test_data);
    single_run_report(
        Scenario::CrossTier { tier: test_tier },
        spec,
        region,
        class_names,
        test_data.labels().to_vec(),
        predicted,
        train_data.len(),
        excluded,
        0,
        Vec::new(),
    )
}

pub fn run_scenario<T: Real>(
    features: &EmbeddingMatrix<T>,
    labels: &LabelSet,
    region: &str,
    scenario: Scenario,
    spec: &ClassifierSpec,
    seed: u64,
) -> Result<EvalReport> {
    match scenario {
        Scenario::Loo => run_loo(features, labels, region, spec),
        Scenario::KShot { k, reps } => run_kshot(features, labels, region, k, reps, spec, seed),
        Scenario::CrossTier { tier } => run_crosstier(features, labels, region, tier, spec),
    }
}

/// Two-sided paired bootstrap p-value for the macro-F1 difference between two
/// prediction vectors over the same test instances.
pub fn paired_bootstrap(
    gold: &[usize],
    pred_a: &[usize],
    pred_b: &[usize],
    num_classes: usize,
    iterations: usize,
    seed: u64,
) -> Result<f64> {
    let n = gold.len();
    if pred_a.len() != n || pred_b.len() != n {
        return Err(Error::data("bootstrap inputs differ in length"));
    }
    if n == 0 {
        return Ok(1.0);
    }
    let delta = macro_f1(gold, pred_a, num_classes)? - macro_f1(gold, pred_b, num_classes)?;
    let mut r = rng::stream(seed, &[0xB007]);
    let mut exceed = 0usize;
    for _ in 0..iterations {
        let mut ca = Confusion::new(num_classes);
        let mut cb = Confusion::new(num_classes);
        for _ in 0..n {
            let i = r.gen_range(0..n);
            ca.add(gold[i], pred_a[i]);
            cb.add(gold[i], pred_b[i]);
        }
        let d = ca.macro_f1() - cb.macro_f1();
        if (d - delta).abs() >= delta.abs() {
            exceed += 1;
        }
    }
    Ok((exceed + 1) as f64 / (iterations + 1) as f64)
}
